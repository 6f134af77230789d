//! Library surface of the experiment front end, so the commands can be
//! driven in-process by the test suites as well as from the binary.

pub mod commands;
pub mod config;

pub use commands::{
    cmd_bench, cmd_distill, cmd_eval, cmd_gen_data, cmd_pseudo, cmd_train_teacher,
};
pub use config::Config;
