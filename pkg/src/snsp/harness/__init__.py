"""Configuration, initial data, drivers and persistence."""
from .config import ConfigError, RunConfig, load_config, parse_config, dump_config
from .initial import InitialData, build_whole_space_data, build_initial, eta_cutoff, whole_space_energy_check
from .drivers import run_path, run_ensemble, refinement_study
from .io import write_snapshot, read_snapshot, write_timeseries, read_timeseries, SnapshotError
