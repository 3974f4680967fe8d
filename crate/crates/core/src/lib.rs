//! Backward filtering forward guiding (BFFG) as optics over Markov kernels.

pub mod cli;
pub mod error;
pub mod instances;
pub mod io;
pub mod kernel;
pub mod linalg;
pub mod measure;
pub mod optics;
pub mod oracle;
pub mod potential;
pub mod sampling;
pub mod space;
pub mod stream;
pub mod tree;

pub use error::{BffgError, Result};
pub use io::{read_model, ModelFile, ResultFile};
pub use kernel::{
    compose_kernels, observation_potential, pullback, pushforward, sample_kernel, tensor_kernels, Kernel, KernelFamily,
    LinearGaussian, ObservationModel,
};
pub use measure::{DiscreteMeasure, FiniteMeasure, GaussianMeasure};
pub use optics::{
    backward_map, check_parallel_equivalence, check_sequential_equivalence, forward_map, guided_kernel, par_compose,
    run_backward, run_forward_measure, seq_compose, weight, BackwardPassState, EquivalenceReport, Message, MessageTree,
    Optic, OpticProgram,
};
pub use potential::{DiscretePotential, GaussianPotential, HPotential};
pub use sampling::{
    forward_sampling_duplicate, forward_sampling_map, run_forward_sampling, GuidedSample, Innovation, SampleTrace,
    SamplingPlan, Weight,
};
pub use space::{Point, Space};
pub use stream::{RandomStream, STREAM_ALGORITHM};
pub use tree::{
    compile_tree, run_bffg_exact, run_bffg_sampling, CompiledTree, Edge, ExactSmoothing, Node, NodeEstimate, NodeRole,
    ProgramLabel, SampledSmoothing, Trajectory, TreeModel,
};
