use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

/// The six EVM-inequivalent code smells.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Smell {
    Ccra,
    Tdt,
    Pca,
    Gli,
    Fgr,
    Bhm,
}

impl Smell {
    pub const ALL: [Smell; 6] = [Smell::Ccra, Smell::Tdt, Smell::Pca, Smell::Gli, Smell::Fgr, Smell::Bhm];

    pub fn id(self) -> &'static str {
        match self {
            Smell::Ccra => "CCRA",
            Smell::Tdt => "TDT",
            Smell::Pca => "PCA",
            Smell::Gli => "GLI",
            Smell::Fgr => "FGR",
            Smell::Bhm => "BHM",
        }
    }

    pub fn title(self) -> &'static str {
        match self {
            Smell::Ccra => "Cross-chain replay attack",
            Smell::Tdt => "Time deviation trap",
            Smell::Pca => "Phishing contract attack",
            Smell::Gli => "Gas limit imbalance",
            Smell::Fgr => "Fixed gas reentrancy",
            Smell::Bhm => "Block height misalignment",
        }
    }

    pub fn description(self) -> &'static str {
        match self {
            Smell::Ccra => "Signature digest lacks a reliable chain identifier, so signatures replay across chains.",
            Smell::Tdt => "Time interval expressed as a block count; block times differ between chains.",
            Smell::Pca => "Call to a hardcoded contract address that may hold different code on another chain.",
            Smell::Gli => "Control flow gated on a fixed gasleft() bound; gas schedules differ between chains.",
            Smell::Fgr => "transfer/send relies on the fixed 2300 stipend for reentrancy safety while state is updated afterwards.",
            Smell::Bhm => "Behaviour keyed to an absolute block height that only makes sense on one chain.",
        }
    }
}

impl fmt::Display for Smell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl FromStr for Smell {
    type Err = String;
    fn from_str(s: &str) -> Result<Smell, String> {
        Smell::ALL
            .into_iter()
            .find(|x| x.id().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| format!("unknown smell `{s}`"))
    }
}
