//! ENUM toolkit: E.164 numbers to DNS names, NAPTR resolution, and a
//! simulated registry/registrar hierarchy for comparing administration
//! models.

pub mod e164;
pub mod ids;
pub mod market;
pub mod naptr;
pub mod registrar;
pub mod registry;
pub mod resolver;
pub mod scenario;
pub mod sim;
pub mod snapshot;
pub mod topology;
pub mod wire;
