//! The bundled scenario suite used by `verify-all`.

use ruelle_core::potential::{Potential, PotentialTable};
use ruelle_core::space::{build_apriori, AprioriMeasure, MeasureSpec, SpaceKind};

use crate::error::CliError;

#[derive(Debug, Clone)]
pub struct Scenario {
    pub name: &'static str,
    pub nu: AprioriMeasure,
    pub potential: Potential,
    pub table: PotentialTable,
}

impl Scenario {
    pub fn new(name: &'static str, spec: MeasureSpec, potential: Potential) -> Result<Self, CliError> {
        let nu = build_apriori(&spec)?;
        let table = potential.tabulate(nu.space())?;
        Ok(Scenario {
            name,
            nu,
            potential,
            table,
        })
    }

    pub fn kind(&self) -> SpaceKind {
        self.nu.space().kind()
    }

    /// Radius beyond which mass counts as escaping the maximizing set.
    pub fn escape_radius(&self) -> f64 {
        default_escape_radius(self.kind())
    }
}

pub fn default_escape_radius(kind: SpaceKind) -> f64 {
    if kind.is_discrete() {
        0.5
    } else {
        0.3
    }
}

pub const ZERO: &str = "zero";
pub const CONSTANT: &str = "constant";
pub const TWO_STATE: &str = "two-state";
pub const XY_FLAT: &str = "xy-gamma-0";
pub const XY_HALF: &str = "xy-gamma-half";
pub const EXP_INTERVAL: &str = "exp-interval";
pub const GEOMETRIC: &str = "geometric";

pub fn two_state_table() -> Potential {
    Potential::table(2, 2, vec![0.0, 1.0, 1.0, 0.0]).expect("valid table")
}

pub fn suite() -> Result<Vec<Scenario>, CliError> {
    Ok(vec![
        Scenario::new(ZERO, MeasureSpec::Uniform { d: 2 }, Potential::constant(0.0))?,
        Scenario::new(CONSTANT, MeasureSpec::Uniform { d: 3 }, Potential::constant(0.7))?,
        Scenario::new(TWO_STATE, MeasureSpec::Uniform { d: 2 }, two_state_table())?,
        Scenario::new(XY_FLAT, MeasureSpec::Circle { n: 64 }, Potential::xy(0.0, 0.0))?,
        Scenario::new(XY_HALF, MeasureSpec::Circle { n: 64 }, Potential::xy(0.0, 0.5))?,
        Scenario::new(EXP_INTERVAL, MeasureSpec::Interval { n: 64 }, Potential::exp_interval(1.0)?)?,
        Scenario::new(
            GEOMETRIC,
            MeasureSpec::Geometric { q: 0.5, n: 8 },
            Potential::neg_distance_to_zero(2)?,
        )?,
    ])
}
