//! Concrete domains and cores: balls, polar star domains, the sector with
//! rounded sides, and rotational extensions to higher dimension.

mod ball;
mod polar;
mod revolve;
mod sector;

pub use ball::{ball_core, make_ball};
pub use polar::{make_polar_star, PolarStarSpec};
pub use revolve::{revolve_core, revolve_to_dim, RevolvedLevel};
pub use sector::{make_sector_domain, SectorDomain, SectorDomainSpec};
