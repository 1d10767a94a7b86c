//! Oilfield unit system used throughout the crate and the conversion factors
//! between it and SI.
//!
//! Every quantity in this crate is expressed in customary oilfield units:
//! time in days, pressure in psi, rates in bbl/day, volumes in bbl,
//! compressibility in 1/psi, permeability in mD, viscosity in cP, and grid
//! lengths in ft. The constants below are the only place unit conversions
//! happen; all downstream formulas are written directly in these units.

/// One millidarcy in square feet (9.869233e-16 m² / 0.3048² m²·ft⁻²).
pub const MD_TO_FT2: f64 = 9.869_233e-16 / (0.3048 * 0.3048);

/// One centipoise in psi·day (1e-3 Pa·s / 6894.757 Pa·psi⁻¹ / 86400 s·day⁻¹).
pub const CP_TO_PSI_DAY: f64 = 1e-3 / 6_894.757 / 86_400.0;

/// Stock-tank barrels per cubic foot (1 bbl = 5.614583 ft³).
pub const FT3_TO_BBL: f64 = 1.0 / 5.614_583;

/// Darcy transmissibility prefactor: flow in bbl/day for k in mD, area and
/// length in ft, pressure in psi, viscosity in cP. Evaluates to ≈1.127e-3,
/// the familiar field-unit constant.
pub const TRANS_BBL_DAY: f64 = MD_TO_FT2 / CP_TO_PSI_DAY * FT3_TO_BBL;

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn transmissibility_prefactor_matches_field_constant() {
        // The textbook value is 1.127e-3 bbl·cP / (day·mD·ft·psi).
        assert!((TRANS_BBL_DAY - 1.127e-3).abs() < 2e-6, "{TRANS_BBL_DAY}");
    }

    #[test]
    fn millidarcy_in_square_feet() {
        assert!((MD_TO_FT2 - 1.0623e-14).abs() < 1e-17);
    }
}
