pub mod dsp;
pub mod edf;
pub mod dataset;
pub mod resample;
pub mod metrics;
pub mod nn;
pub mod synth;

#[cfg(doctest)]
mod book {
    macro_rules! chapter {
        ($name:ident, $file:literal) => {
            #[doc = include_str!(concat!("../../../book/src/", $file))]
            pub struct $name;
        };
    }
    chapter!(Introduction, "introduction.md");
    chapter!(Recordings, "recordings.md");
    chapter!(Filtering, "filtering.md");
    chapter!(Windows, "windows.md");
    chapter!(Balancing, "balancing.md");
    chapter!(Network, "network.md");
    chapter!(Training, "training.md");
    chapter!(Metrics, "metrics.md");
    chapter!(Pipeline, "pipeline.md");
}
