//! Energy densities and problem-specific functionals.

pub mod cohesive;
pub mod contact;
pub mod elastic;
pub mod fiber;
pub mod kirsch;
pub mod mpc;
pub mod neural;
pub mod transport;

pub use cohesive::{
    cohesive_density, cohesive_potential, cohesive_traction, update_history, CohesiveInterface,
    CohesiveParams,
};
pub use contact::PenaltyContact;
pub use elastic::{
    linear_elastic_density, neo_hookean_density, Elastic, ElasticModel, Lame, MaterialField,
    Traction,
};
pub use fiber::FiberEnergy;
pub use kirsch::{kirsch_reference, to_polar};
pub use mpc::{
    homogenized_tangent, moment_about, rigid_body_lift, voigt_unit_strains, ConstraintFn,
    Constraints, Homogenization, Lagrangian, PeriodicConstraints, RigidBodyDofs, RigidLift,
};
pub use neural::{mlp_energy_density, Mlp, MlpElastic, NeuralInclusion};
pub use transport::{stream_velocity, triangle_normals, AdvectionDiffusion, TransientHeat};
