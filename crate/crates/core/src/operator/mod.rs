//! Finite windows of the band unitaries: `S(t)`, `U_ω = D_ω S`, the
//! half-lattice `S⁺`/`U⁺`, CMV matrices, and the diagonal basis change
//! relating CMV to `-U⁺`.

mod cmv;
mod dump;
mod identities;
mod window;

pub use cmv::{basis_change_closed_form, build_basis_change, cmv_conjugation_check, BasisChange};
pub use dump::{parse_window_csv, window_csv, window_header, WindowHeader};
pub use identities::{cyclicity_identity_check, half_lattice_identity_check, IdentityDefects};
pub use window::{
    apply_phases, build_cmv, build_diagonal, build_s_plus, build_s_window, build_u_plus,
    build_u_window, s_full_entry, s_plus_entry, unitarity_tolerance, BandUnitaryWindow, Boundary,
    Flavor,
};
