pub mod config;
pub mod darkstate;
pub mod eom;
pub mod error;
pub mod experiments;
pub mod grid;
pub mod io;
pub mod lattice;
pub mod observables;
pub mod params;
pub mod scenarios;
pub mod solver1;
pub mod solver2;
pub mod validate;
