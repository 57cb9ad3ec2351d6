//! Run configuration, presets, and result files.

pub mod config;
pub mod output;
pub mod presets;
pub mod velocity;

pub use config::{
    build_case, optimizer_options, parse_config, parse_config_str, resolve, to_toml, RunConfig, RunSetup,
};
pub use output::{
    read_field_csv, write_control_csv, write_convergence_csv, write_field_csv, write_gradient_check_csv, write_history,
    write_run_outputs, write_summary, write_vtk,
};
pub use presets::{preset, presets, Preset};
pub use velocity::{read_velocity_file, write_velocity_file};
