pub mod annotation;
pub mod detector;
pub mod error;
pub mod eval;
pub mod io;
pub mod layout;
pub mod models;
pub mod pipeline;
pub mod preprocess;
pub mod scalar;
pub mod stream;
pub mod synth;
pub mod windowing;

/// Double-precision instantiations.
pub type Corpus = pipeline::Corpus<f64>;
pub type TrainedModel = models::TrainedModel<f64>;
pub type Network = models::Network<f64>;
pub type FrameSequence = stream::FrameSequence<f64>;
pub type WindowSet = windowing::WindowSet<f64>;
pub type Decision = detector::Decision<f64>;

/// Single-precision instantiations.
pub type CorpusF32 = pipeline::Corpus<f32>;
pub type TrainedModelF32 = models::TrainedModel<f32>;
pub type NetworkF32 = models::Network<f32>;
pub type FrameSequenceF32 = stream::FrameSequence<f32>;
pub type WindowSetF32 = windowing::WindowSet<f32>;
pub type DecisionF32 = detector::Decision<f32>;
