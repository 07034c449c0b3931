//! Energy and time units.
//!
//! Every scenario works in one energy unit and one time unit. Frequencies are
//! quoted as energies (ħω), and the only place the two meet is the conversion
//! factor ħ used when a Liouvillian or an amplitude equation is assembled.

use serde::{Deserialize, Serialize};

/// Reduced Planck constant in eV·fs.
pub const HBAR_EV_FS: f64 = 0.6582119569;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EnergyUnit {
    #[serde(rename = "eV")]
    Ev,
    #[serde(rename = "meV")]
    Mev,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TimeUnit {
    Fs,
    Ps,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Units {
    pub energy: EnergyUnit,
    pub time: TimeUnit,
}

impl EnergyUnit {
    /// Size of one unit in eV.
    pub fn in_ev(self) -> f64 {
        match self {
            EnergyUnit::Ev => 1.0,
            EnergyUnit::Mev => 1e-3,
        }
    }
}

impl TimeUnit {
    /// Size of one unit in fs.
    pub fn in_fs(self) -> f64 {
        match self {
            TimeUnit::Fs => 1.0,
            TimeUnit::Ps => 1e3,
        }
    }
}

impl Units {
    pub const EV_FS: Units = Units {
        energy: EnergyUnit::Ev,
        time: TimeUnit::Fs,
    };
    pub const MEV_PS: Units = Units {
        energy: EnergyUnit::Mev,
        time: TimeUnit::Ps,
    };

    /// ħ expressed in (energy unit)·(time unit).
    pub fn hbar(&self) -> f64 {
        HBAR_EV_FS / (self.energy.in_ev() * self.time.in_fs())
    }
}

impl Default for Units {
    fn default() -> Self {
        Units::EV_FS
    }
}
