//! Molecular input: PQR parsing, charge systems, and the Born-ion oracle.
//!
//! Charges are kept in the pre-scaled dimensionless form `z_i` used by the
//! regularized equation. Raw PQR charges (in units of the elementary charge)
//! are converted with a single scale factor, see [`reduced_charge_scale`].

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::splitting::Scheme;
use crate::Point;

#[derive(Debug, Error)]
pub enum MolioError {
    #[error("PQR parse error on line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("no ATOM/HETATM records found")]
    EmptyInput,
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("domain error: {0}")]
    Domain(String),
}

const ELEMENTARY_CHARGE: f64 = 1.602_176_634e-19;
const VACUUM_PERMITTIVITY: f64 = 8.854_187_812_8e-12;
const BOLTZMANN: f64 = 1.380_649e-23;

/// Factor converting a charge in units of `e` into the reduced charge `z_i`
/// (units of Å) for potentials measured in `kT/e`: `e^2 / (ε0 k T)`.
pub fn reduced_charge_scale(temperature_kelvin: f64) -> f64 {
    let metres = ELEMENTARY_CHARGE * ELEMENTARY_CHARGE
        / (VACUUM_PERMITTIVITY * BOLTZMANN * temperature_kelvin);
    metres * 1e10
}

/// Default temperature for unit conversion.
pub const ROOM_TEMPERATURE: f64 = 298.15;

/// A point charge, `z` already in reduced units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PointCharge {
    pub position: [f64; 3],
    pub z: f64,
}

impl PointCharge {
    pub fn new(position: Point, z: f64) -> Self {
        Self { position: [position.x, position.y, position.z], z }
    }

    pub fn point(&self) -> Point {
        Point::new(self.position[0], self.position[1], self.position[2])
    }
}

/// Fixed charges plus the dielectric and ionic data of the two regions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChargeSystem {
    pub charges: Vec<PointCharge>,
    /// Dielectric constant of the molecular region.
    pub eps_m: f64,
    /// Dielectric constant of the solvent region.
    pub eps_s: f64,
    /// Modified Debye-Hückel parameter squared in the solvent; zero inside the molecule.
    pub kappa2: f64,
}

impl ChargeSystem {
    pub fn new(charges: Vec<PointCharge>, eps_m: f64, eps_s: f64, kappa2: f64) -> Result<Self, MolioError> {
        if charges.is_empty() {
            return Err(MolioError::EmptyInput);
        }
        Self::neutral(eps_m, eps_s, kappa2).map(|cs| Self { charges, ..cs })
    }

    /// A dielectric configuration without fixed charges (manufactured-solution runs).
    pub fn neutral(eps_m: f64, eps_s: f64, kappa2: f64) -> Result<Self, MolioError> {
        if !(eps_m > 0.0 && eps_s > 0.0) {
            return Err(MolioError::InvalidParameter(format!(
                "dielectric constants must be positive (eps_m={eps_m}, eps_s={eps_s})"
            )));
        }
        if !(kappa2 >= 0.0) {
            return Err(MolioError::InvalidParameter(format!("kappa2 must be non-negative, got {kappa2}")));
        }
        Ok(Self { charges: Vec::new(), eps_m, eps_s, kappa2 })
    }

    pub fn kappa(&self) -> f64 {
        self.kappa2.sqrt()
    }

    /// The same system with every charge multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        let mut out = self.clone();
        for c in &mut out.charges {
            c.z *= factor;
        }
        out
    }
}

/// One ATOM/HETATM record of a PQR file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PqrAtom {
    pub record: String,
    pub serial: i64,
    pub name: String,
    pub residue: String,
    pub chain: Option<String>,
    pub res_seq: String,
    pub position: [f64; 3],
    pub charge: f64,
    pub radius: f64,
}

impl PqrAtom {
    pub fn center(&self) -> Point {
        Point::new(self.position[0], self.position[1], self.position[2])
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct PqrStructure {
    pub atoms: Vec<PqrAtom>,
}

impl PqrStructure {
    /// Charge system with charges converted by `charge_scale` (see [`reduced_charge_scale`]).
    pub fn charge_system(&self, eps_m: f64, eps_s: f64, kappa2: f64, charge_scale: f64) -> Result<ChargeSystem, MolioError> {
        let charges = self
            .atoms
            .iter()
            .map(|a| PointCharge { position: a.position, z: a.charge * charge_scale })
            .collect();
        ChargeSystem::new(charges, eps_m, eps_s, kappa2)
    }

    /// `(center, radius)` pairs for surface generation.
    pub fn spheres(&self) -> Vec<(Point, f64)> {
        self.atoms.iter().map(|a| (a.center(), a.radius)).collect()
    }

    /// Serialize back to whitespace-delimited PQR text.
    pub fn to_pqr_string(&self) -> String {
        let mut out = String::new();
        for a in &self.atoms {
            let chain = a.chain.as_deref().map(|c| format!(" {c}")).unwrap_or_default();
            // `{:?}` prints the shortest representation that parses back exactly.
            let _ = writeln!(
                out,
                "{} {} {} {}{} {} {:?} {:?} {:?} {:?} {:?}",
                a.record, a.serial, a.name, a.residue, chain, a.res_seq, a.position[0], a.position[1],
                a.position[2], a.charge, a.radius
            );
        }
        out.push_str("END\n");
        out
    }
}

/// Parse whitespace-delimited PQR text.
///
/// Accepts both the 10-field (`ATOM serial name res resSeq x y z q r`) and the
/// 11-field (with chain identifier) layout. Other records are ignored.
pub fn parse_pqr(text: &str) -> Result<PqrStructure, MolioError> {
    let mut atoms = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let lineno = idx + 1;
        let fields: Vec<&str> = line.split_whitespace().collect();
        let Some(&record) = fields.first() else { continue };
        if record != "ATOM" && record != "HETATM" {
            continue;
        }
        let err = |message: String| MolioError::Parse { line: lineno, message };
        let (chain, rest) = match fields.len() {
            10 => (None, &fields[4..]),
            11 => (Some(fields[4].to_string()), &fields[5..]),
            n => return Err(err(format!("expected 10 or 11 fields, found {n}"))),
        };
        let num = |s: &str, what: &str| {
            s.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| err(format!("{what} {s:?} is not a number")))
        };
        let serial = fields[1]
            .parse::<i64>()
            .map_err(|_| err(format!("serial {:?} is not an integer", fields[1])))?;
        let atom = PqrAtom {
            record: record.to_string(),
            serial,
            name: fields[2].to_string(),
            residue: fields[3].to_string(),
            chain,
            res_seq: rest[0].to_string(),
            position: [num(rest[1], "x")?, num(rest[2], "y")?, num(rest[3], "z")?],
            charge: num(rest[4], "charge")?,
            radius: num(rest[5], "radius")?,
        };
        if atom.radius <= 0.0 {
            return Err(err(format!("radius must be positive, got {}", atom.radius)));
        }
        atoms.push(atom);
    }
    if atoms.is_empty() {
        return Err(MolioError::EmptyInput);
    }
    Ok(PqrStructure { atoms })
}

pub fn read_pqr(path: impl AsRef<Path>) -> crate::Result<PqrStructure> {
    let text = std::fs::read_to_string(path.as_ref()).map_err(crate::io_err(path.as_ref()))?;
    Ok(parse_pqr(&text)?)
}

/// A single spherical ion with a charge at its centre; the sphere is the
/// dielectric interface.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BornIon {
    pub radius: f64,
    pub charge: f64,
    pub eps_m: f64,
    pub eps_s: f64,
    pub domain_radius: f64,
}

impl BornIon {
    pub fn new(radius: f64, charge: f64, eps_m: f64, eps_s: f64, domain_radius: f64) -> Result<Self, MolioError> {
        if !(radius > 0.0 && radius < domain_radius) {
            return Err(MolioError::InvalidParameter(format!(
                "need 0 < radius < domain_radius, got {radius} and {domain_radius}"
            )));
        }
        if !(eps_m > 0.0 && eps_s > 0.0) {
            return Err(MolioError::InvalidParameter("dielectric constants must be positive".into()));
        }
        Ok(Self { radius, charge, eps_m, eps_s, domain_radius })
    }

    /// Unit charge in a unit ball, `ε_m = 2`, `ε_s = 80`, truncated at radius 5.
    pub fn reference() -> Self {
        Self { radius: 1.0, charge: 1.0, eps_m: 2.0, eps_s: 80.0, domain_radius: 5.0 }
    }

    /// Charge system with the ion at the origin and no ionic screening.
    pub fn charge_system(&self) -> ChargeSystem {
        ChargeSystem {
            charges: vec![PointCharge { position: [0.0; 3], z: self.charge }],
            eps_m: self.eps_m,
            eps_s: self.eps_s,
            kappa2: 0.0,
        }
    }

    fn check(r: f64) -> Result<(), MolioError> {
        if r > 0.0 {
            Ok(())
        } else {
            Err(MolioError::Domain(format!("radial distance must be positive, got {r}")))
        }
    }

    pub fn singular(&self, r: f64) -> f64 {
        self.charge / (self.eps_m * r)
    }

    /// Harmonic extension of `-u^s` from the sphere: a constant.
    pub fn harmonic(&self) -> f64 {
        -self.charge / (self.eps_m * self.radius)
    }

    pub fn exact_full(&self, r: f64) -> Result<f64, MolioError> {
        Self::check(r)?;
        Ok(if r <= self.radius {
            self.charge / (self.eps_m * r) + self.charge * (1.0 / self.eps_s - 1.0 / self.eps_m) / self.radius
        } else {
            self.charge / (self.eps_s * r)
        })
    }

    /// Regular component in closed form (no cancellation near the charge);
    /// defined at `r = 0`.
    pub fn exact_regular(&self, r: f64, scheme: Scheme) -> Result<f64, MolioError> {
        if !(r >= 0.0) {
            return Err(MolioError::Domain(format!("radial distance must be non-negative, got {r}")));
        }
        let (q, a) = (self.charge, self.radius);
        let d = 1.0 / self.eps_s - 1.0 / self.eps_m;
        Ok(match (scheme, r <= a) {
            (Scheme::TwoTerm, true) => q * d / a,
            (Scheme::TwoTerm, false) => q * d / r,
            (Scheme::ThreeTerm, true) => q / (self.eps_s * a),
            (Scheme::ThreeTerm, false) => q / (self.eps_s * r),
        })
    }

    /// Radial derivative of the regular component (zero inside for the three-term split).
    pub fn exact_regular_slope(&self, r: f64, scheme: Scheme) -> f64 {
        if r <= self.radius {
            return 0.0;
        }
        let slope = -self.charge / (self.eps_s * r * r);
        match scheme {
            Scheme::TwoTerm => slope + self.charge / (self.eps_m * r * r),
            Scheme::ThreeTerm => slope,
        }
    }

    /// Closed-form electrostatic solvation energy `(q²/2)(1/ε_s − 1/ε_m)/a`.
    pub fn solvation_energy(&self) -> f64 {
        0.5 * self.charge * self.charge * (1.0 / self.eps_s - 1.0 / self.eps_m) / self.radius
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn parses_single_record() {
        let s = parse_pqr("ATOM 1 N MET 1 0.0 0.0 0.0 1.0 1.5").unwrap();
        assert_eq!(s.atoms.len(), 1);
        let a = &s.atoms[0];
        assert_eq!(a.position, [0.0; 3]);
        assert_eq!(a.charge, 1.0);
        assert_eq!(a.radius, 1.5);
        assert_eq!(a.chain, None);
    }

    #[test]
    fn skips_non_atom_records() {
        let text = "REMARK generated\nATOM 1 N MET A 1 0 0 0 0.5 1.5\nHETATM 2 O HOH A 2 1 2 3 -0.5 1.4\n";
        let s = parse_pqr(text).unwrap();
        assert_eq!(s.atoms.len(), 2);
        assert_eq!(s.atoms[0].chain.as_deref(), Some("A"));
        assert_eq!(s.atoms[1].position, [1.0, 2.0, 3.0]);
    }

    #[test]
    fn bad_charge_names_line() {
        let text = "REMARK x\nATOM 1 N MET 1 0.0 0.0 0.0 abc 1.5\n";
        match parse_pqr(text) {
            Err(MolioError::Parse { line, message }) => {
                assert_eq!(line, 2);
                assert!(message.contains("charge"));
            }
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn empty_input_is_rejected() {
        assert!(matches!(parse_pqr("REMARK only\nEND\n"), Err(MolioError::EmptyInput)));
    }

    #[test]
    fn charge_scale_matches_bjerrum_length() {
        // Vacuum Bjerrum length at 298.15 K is about 560.4 Å.
        let lb = reduced_charge_scale(ROOM_TEMPERATURE) / (4.0 * std::f64::consts::PI);
        assert!((lb - 560.4).abs() < 0.2, "{lb}");
    }

    #[test]
    fn born_values() {
        let b = BornIon::reference();
        assert_relative_eq!(b.exact_full(1.0 - 1e-12).unwrap(), 0.0125, epsilon = 1e-10);
        assert_relative_eq!(b.exact_full(2.0).unwrap(), 0.00625, epsilon = 1e-15);
        assert_relative_eq!(b.exact_regular(1.0, Scheme::TwoTerm).unwrap(), -0.4875, epsilon = 1e-14);
        assert_relative_eq!(b.exact_regular(0.5, Scheme::ThreeTerm).unwrap(), 0.0125, epsilon = 1e-14);
        assert_relative_eq!(b.exact_regular(2.0, Scheme::ThreeTerm).unwrap(), 0.00625, epsilon = 1e-15);
        assert_relative_eq!(b.solvation_energy(), -0.24375, epsilon = 1e-15);
        assert!(b.exact_full(0.0).is_err());
        assert!(b.exact_regular(-1.0, Scheme::ThreeTerm).is_err());
        assert_eq!(b.exact_regular(0.0, Scheme::ThreeTerm).unwrap(), 0.0125);
        for r in [0.3, 0.9, 1.7] {
            let direct = b.exact_full(r).unwrap() - b.singular(r);
            assert_relative_eq!(b.exact_regular(r, Scheme::TwoTerm).unwrap(), direct, epsilon = 1e-14);
            let three = if r <= 1.0 { direct - b.harmonic() } else { b.exact_full(r).unwrap() };
            assert_relative_eq!(b.exact_regular(r, Scheme::ThreeTerm).unwrap(), three, epsilon = 1e-14);
        }
    }

    #[test]
    fn uniform_dielectric_is_coulomb() {
        let b = BornIon::new(1.0, 3.0, 4.0, 4.0, 5.0).unwrap();
        for r in [0.1, 0.5, 0.99, 1.5, 4.0] {
            assert_relative_eq!(b.exact_full(r).unwrap(), 3.0 / (4.0 * r), epsilon = 1e-14);
        }
    }

    #[test]
    fn three_term_continuity_at_surface() {
        let b = BornIon::reference();
        let inside = b.exact_regular(1.0 - 1e-9, Scheme::ThreeTerm).unwrap();
        let outside = b.exact_regular(1.0 + 1e-9, Scheme::ThreeTerm).unwrap();
        assert!((inside - outside).abs() < 1e-9);
    }

    proptest::proptest! {
        #[test]
        fn split_reassembles_full(r in 1e-3f64..5.0) {
            let b = BornIon::reference();
            let full = b.exact_full(r).unwrap();
            let reg = b.exact_regular(r, Scheme::ThreeTerm).unwrap();
            let add = if r <= b.radius { b.singular(r) + b.harmonic() } else { 0.0 };
            proptest::prop_assert!((full - (reg + add)).abs() <= 1e-12 * full.abs().max(1.0));
        }

        #[test]
        fn two_term_amplification(r in 1.0f64..5.0) {
            let b = BornIon::reference();
            let ratio = b.exact_regular(r, Scheme::TwoTerm).unwrap().abs() / b.exact_full(r).unwrap().abs();
            proptest::prop_assert!((ratio - 39.0).abs() < 1e-9);
        }

        #[test]
        fn pqr_roundtrip(xs in proptest::collection::vec((-50.0f64..50.0, -50.0f64..50.0, -50.0f64..50.0, -2.0f64..2.0, 0.5f64..3.0, proptest::bool::ANY), 1..8)) {
            let atoms = xs.iter().enumerate().map(|(i, &(x, y, z, q, r, chain))| PqrAtom {
                record: "ATOM".into(),
                serial: i as i64 + 1,
                name: "CA".into(),
                residue: "ALA".into(),
                chain: chain.then(|| "B".to_string()),
                res_seq: format!("{}", i + 7),
                position: [x, y, z],
                charge: q,
                radius: r,
            }).collect();
            let s = PqrStructure { atoms };
            let back = parse_pqr(&s.to_pqr_string()).unwrap();
            proptest::prop_assert_eq!(back, s);
        }
    }
}
