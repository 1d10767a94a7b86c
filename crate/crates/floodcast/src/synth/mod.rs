//! Synthetic truth generation: channelized permeability fields, a
//! single-phase implicit reservoir simulator, exact material-balance-world
//! panels, and randomized benchmark cases.

mod cases;
mod channel;
mod crm_world;
mod schedule;
mod sim;

pub use cases::{default_schedule, make_cases, CaseSetConfig, SimCase};
pub use channel::{gen_channel_field, ChannelFieldConfig};
pub use crm_world::generate_crm_world;
pub use schedule::{RateStep, Schedule};
pub use sim::{simulate_diffusivity, simulate_diffusivity_full, SimulationOutput};
