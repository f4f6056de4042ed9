//! Physical constants (CODATA 2018) and the default species.

/// Reduced Planck constant, J·s.
pub const HBAR: f64 = 1.054_571_817e-34;
/// Vacuum permittivity, F/m.
pub const EPSILON_0: f64 = 8.854_187_812_8e-12;
/// Speed of light in vacuum, m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;
/// Boltzmann constant, J/K.
pub const BOLTZMANN: f64 = 1.380_649e-23;
/// Elementary charge, C.
pub const ELEMENTARY_CHARGE: f64 = 1.602_176_634e-19;
/// Bohr radius, m.
pub const BOHR_RADIUS: f64 = 5.291_772_109_03e-11;
/// Atomic unit of electric dipole moment, e·a₀ in C·m.
pub const EA0: f64 = ELEMENTARY_CHARGE * BOHR_RADIUS;

/// ⁸⁷Rb atomic mass, kg.
pub const RB87_MASS: f64 = 1.4432e-25;

/// Tag written into run metadata so outputs record which constant set produced them.
pub const CONSTANTS_VERSION: &str = "CODATA-2018";
