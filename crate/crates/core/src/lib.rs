//! Simulated peg-in-hole insertion learned with an N-step dueling DQN under a
//! force/torque safety supervisor.

pub mod agent;
pub mod env;
pub mod harness;
pub mod kinematics;
pub mod nn;
pub mod sim;
pub mod tcs;
