//! One module per subcommand; each exposes a clap `Args` struct and a
//! `run` function returning the process outcome.

pub mod identify;
pub mod metrics;
pub mod relabel;
pub mod simulate;
pub mod sweep;
pub mod table1_check;

use clap::ValueEnum;
use genkl::LogBase;

/// `--base {2,e}`: which logarithm the divergences use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, ValueEnum)]
pub enum BaseArg {
    #[default]
    #[value(name = "2")]
    Two,
    #[value(name = "e")]
    E,
}

impl From<BaseArg> for LogBase {
    fn from(value: BaseArg) -> Self {
        match value {
            BaseArg::Two => LogBase::Two,
            BaseArg::E => LogBase::E,
        }
    }
}
