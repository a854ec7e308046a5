//! Reference computations for the test suites.
//!
//! Everything here is deliberately naive and shares no numerical code with
//! the production crates: power flow by Newton-Raphson on the nodal
//! admittance equations, hosting capacity by bisection and lattice search on
//! that Newton solve, least-distance programs by active-set enumeration and
//! combinatorics by brute-force enumeration.

pub mod combinatorics;
pub mod newton;
pub mod optimize;
pub mod ranking;
