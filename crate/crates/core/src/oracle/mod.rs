//! The trusted Oracle.
//!
//! Ball counting pipeline: RGB → HSV, orange mask, blur the original frame
//! twice and keep it under the mask, grayscale, Canny edges, Hough circles.
//! Counters are pluggable through [`DetectorRegistry`]; `"hough"` is the
//! built-in pipeline.

mod canny;
mod color;
mod filter;
mod frame;
mod hough;
mod scene;

use std::collections::BTreeMap;
use std::fmt;

use thiserror::Error;

use crate::contract::velocity::{ENTRY_REPORT_COUNT, MAX_BALLS};
use crate::contract::{Args, ContractEngine, EngineError, Operation, Value};
use crate::kv::{KvError, KvFile};
use crate::ledger::{
    BlobError, BlobStore, Digest, ImageAnchorPayload, KeyHash, Ledger, LedgerError, Payload,
};

pub use canny::{canny, sobel, ThresholdError};
pub use color::{
    hsv_to_rgb_pixel, orange_mask, rgb_to_hsv, rgb_to_hsv_pixel, Hsv, HsvFrame, HueBand,
};
pub use filter::{gaussian_blur, gaussian_kernel, luminance, masked_gray, BlurParams};
pub use frame::{EdgeMap, Frame, FrameError, GrayImage, Mask, Raster, MIN_SIDE};
pub use hough::{circle_offsets, hough_circles, CircleDetection, HoughParams};
pub use scene::{Ball, SceneError, SceneSpec, SceneStyle, MAX_SCENE_BALLS, PICK_MARGIN};

/// Every tunable of the counting pipeline.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleConfig {
    pub detector: String,
    pub band: HueBand,
    pub blur: BlurParams,
    pub canny_low: f32,
    pub canny_high: f32,
    pub hough: HoughParams,
    pub max_count: usize,
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self {
            detector: "hough".into(),
            band: HueBand::default(),
            blur: BlurParams::default(),
            canny_low: 50.0,
            canny_high: 150.0,
            hough: HoughParams::default(),
            max_count: MAX_BALLS as usize,
        }
    }
}

impl OracleConfig {
    /// Overrides fields from `kv`, consuming the keys it recognizes.
    pub fn apply(&mut self, kv: &mut KvFile) -> Result<(), KvError> {
        kv.take_into("detector", &mut self.detector)?;
        kv.take_into("hue_min", &mut self.band.hue_min)?;
        kv.take_into("hue_max", &mut self.band.hue_max)?;
        kv.take_into("sat_min", &mut self.band.sat_min)?;
        kv.take_into("val_min", &mut self.band.val_min)?;
        kv.take_into("blur_kernel", &mut self.blur.kernel)?;
        kv.take_into("blur_sigma", &mut self.blur.sigma)?;
        kv.take_into("blur_passes", &mut self.blur.passes)?;
        kv.take_into("canny_low", &mut self.canny_low)?;
        kv.take_into("canny_high", &mut self.canny_high)?;
        kv.take_into("hough_r_min", &mut self.hough.r_min)?;
        kv.take_into("hough_r_max", &mut self.hough.r_max)?;
        kv.take_into("hough_vote_threshold", &mut self.hough.vote_threshold)?;
        kv.take_into("hough_min_center_dist", &mut self.hough.min_center_dist)?;
        kv.take_into("max_count", &mut self.max_count)?;
        self.validate()
    }

    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    pub fn validate(&self) -> Result<(), KvError> {
        let bad = |m: &str| Err(KvError::Invalid(m.to_owned()));
        if self.blur.kernel.is_multiple_of(2) {
            return bad("blur_kernel must be odd");
        }
        if !(self.blur.sigma > 0.0) {
            return bad("blur_sigma must be positive");
        }
        if !(self.canny_low < self.canny_high) {
            return bad("canny_low must be below canny_high");
        }
        if self.hough.r_min >= self.hough.r_max || self.hough.r_min == 0 {
            return bad("hough radius band must satisfy 0 < r_min < r_max");
        }
        if self.band.hue_min > self.band.hue_max {
            return bad("hue_min must not exceed hue_max");
        }
        Ok(())
    }

    pub fn from_kv_text(text: &str) -> Result<Self, KvError> {
        let mut kv = KvFile::parse(text)?;
        let mut cfg = Self::default();
        cfg.apply(&mut kv)?;
        kv.finish()?;
        Ok(cfg)
    }

    pub fn to_kv_text(&self) -> String {
        format!(
            "detector = {}\nhue_min = {}\nhue_max = {}\nsat_min = {}\nval_min = {}\n\
             blur_kernel = {}\nblur_sigma = {}\nblur_passes = {}\ncanny_low = {}\ncanny_high = {}\n\
             hough_r_min = {}\nhough_r_max = {}\nhough_vote_threshold = {}\nhough_min_center_dist = {}\n\
             max_count = {}\n",
            self.detector,
            self.band.hue_min,
            self.band.hue_max,
            self.band.sat_min,
            self.band.val_min,
            self.blur.kernel,
            self.blur.sigma,
            self.blur.passes,
            self.canny_low,
            self.canny_high,
            self.hough.r_min,
            self.hough.r_max,
            self.hough.vote_threshold,
            self.hough.min_center_dist,
            self.max_count,
        )
    }
}

/// Counts balls in a frame.
pub trait BallCounter: Send + Sync {
    fn name(&self) -> &str;
    fn detect(&self, frame: &Frame) -> Vec<CircleDetection>;
    fn max_count(&self) -> usize;

    fn count(&self, frame: &Frame) -> usize {
        self.detect(frame).len().min(self.max_count())
    }
}

/// Intermediate rasters of one pipeline run.
#[derive(Debug, Clone)]
pub struct PipelineStages {
    pub hsv: HsvFrame,
    pub mask: Mask,
    pub gray: GrayImage,
    pub edges: EdgeMap,
    pub circles: Vec<CircleDetection>,
}

#[derive(Debug, Clone)]
pub struct HoughPipeline {
    cfg: OracleConfig,
}

impl HoughPipeline {
    pub fn new(cfg: OracleConfig) -> Self {
        Self { cfg }
    }

    pub fn stages(&self, frame: &Frame) -> PipelineStages {
        let hsv = rgb_to_hsv(frame);
        let mask = orange_mask(&hsv, &self.cfg.band);
        let gray = masked_gray(frame, &mask, &self.cfg.blur).expect("mask derived from frame");
        let edges = canny(&gray, self.cfg.canny_low, self.cfg.canny_high)
            .expect("thresholds validated with the config");
        let circles = hough_circles(&edges, &self.cfg.hough);
        PipelineStages {
            hsv,
            mask,
            gray,
            edges,
            circles,
        }
    }
}

impl BallCounter for HoughPipeline {
    fn name(&self) -> &str {
        "hough"
    }

    fn detect(&self, frame: &Frame) -> Vec<CircleDetection> {
        self.stages(frame).circles
    }

    fn max_count(&self) -> usize {
        self.cfg.max_count
    }
}

pub type CounterFactory = fn(&OracleConfig) -> Box<dyn BallCounter>;

/// Ball counters selectable by name from configuration.
#[derive(Clone)]
pub struct DetectorRegistry {
    factories: BTreeMap<String, CounterFactory>,
}

impl fmt::Debug for DetectorRegistry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_set().entries(self.factories.keys()).finish()
    }
}

impl Default for DetectorRegistry {
    fn default() -> Self {
        let mut r = Self {
            factories: BTreeMap::new(),
        };
        r.register("hough", |cfg| Box::new(HoughPipeline::new(cfg.clone())));
        r
    }
}

impl DetectorRegistry {
    pub fn register(&mut self, name: &str, factory: CounterFactory) {
        self.factories.insert(name.to_owned(), factory);
    }

    pub fn build(&self, cfg: &OracleConfig) -> Option<Box<dyn BallCounter>> {
        self.factories.get(&cfg.detector).map(|f| f(cfg))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.factories.keys().map(String::as_str)
    }
}

/// Full pipeline with the given configuration, capped at `max_count`.
pub fn count_balls(frame: &Frame, cfg: &OracleConfig) -> usize {
    HoughPipeline::new(cfg.clone()).count(frame)
}

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("unknown detector {0:?}")]
    UnknownDetector(String),
    #[error(transparent)]
    Blob(#[from] BlobError),
    #[error(transparent)]
    Ledger(#[from] LedgerError),
    #[error(transparent)]
    Engine(#[from] EngineError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleReport {
    pub count: usize,
    pub image_id: String,
    pub image_hash: Digest,
    pub operations: Vec<Operation>,
}

/// The off-chain reporter: anchors each frame, counts balls and writes the
/// count into the contract it is trusted by.
pub struct Oracle {
    key: KeyHash,
    contract: String,
    counter: Box<dyn BallCounter>,
}

impl fmt::Debug for Oracle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Oracle")
            .field("key", &self.key)
            .field("contract", &self.contract)
            .field("counter", &self.counter.name())
            .finish()
    }
}

impl Oracle {
    pub fn new(
        key: KeyHash,
        contract: impl Into<String>,
        cfg: &OracleConfig,
        registry: &DetectorRegistry,
    ) -> Result<Self, OracleError> {
        let counter = registry
            .build(cfg)
            .ok_or_else(|| OracleError::UnknownDetector(cfg.detector.clone()))?;
        Ok(Self {
            key,
            contract: contract.into(),
            counter,
        })
    }

    pub fn key(&self) -> &KeyHash {
        &self.key
    }

    pub fn counter(&self) -> &dyn BallCounter {
        self.counter.as_ref()
    }

    /// Anchors `frame`, counts it and reports the count. The anchor is
    /// submitted before the contract call.
    pub fn observe(
        &self,
        frame: &Frame,
        ledger: &mut Ledger,
        blobs: &mut BlobStore,
        engine: &mut ContractEngine,
        context: &str,
    ) -> Result<OracleReport, OracleError> {
        let bytes = frame.to_ppm();
        let (image_hash, image_id) = blobs.anchor_image(&bytes)?;
        ledger.submit(
            &self.key,
            format!("{context}: frame {image_id}"),
            Payload::ImageAnchor(ImageAnchorPayload {
                image_hash,
                image_id: image_id.clone(),
            }),
        )?;
        let count = self.counter.count(frame);
        let params = Args::new().with("count", Value::Nat(count as u64));
        let (operations, _) = engine.call_entry(
            ledger,
            &self.contract,
            ENTRY_REPORT_COUNT,
            &self.key,
            &params,
            &format!("{context}: {count} ball(s) in {image_id}"),
        )?;
        Ok(OracleReport {
            count,
            image_id,
            image_hash,
            operations,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_text_roundtrip() {
        let mut cfg = OracleConfig::default();
        cfg.hough.vote_threshold = 0.55;
        cfg.canny_low = 40.0;
        let back = OracleConfig::from_kv_text(&cfg.to_kv_text()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn config_rejects_inverted_thresholds() {
        assert!(OracleConfig::from_kv_text("canny_low = 200").is_err());
        assert!(OracleConfig::from_kv_text("blur_kernel = 4").is_err());
        assert!(OracleConfig::from_kv_text("hough_r_min = 20").is_err());
        assert!(OracleConfig::from_kv_text("bogus = 1").is_err());
    }

    #[test]
    fn registry_builds_by_name() {
        let reg = DetectorRegistry::default();
        assert_eq!(reg.names().collect::<Vec<_>>(), vec!["hough"]);
        let cfg = OracleConfig::default();
        assert_eq!(reg.build(&cfg).unwrap().name(), "hough");
        let other = OracleConfig {
            detector: "yolo".into(),
            ..cfg
        };
        assert!(reg.build(&other).is_none());
    }

    #[test]
    fn background_only_counts_zero() {
        let frame = SceneSpec::random(&SceneStyle::default(), 0, 3)
            .unwrap()
            .render()
            .unwrap();
        assert_eq!(count_balls(&frame, &OracleConfig::default()), 0);
    }
}
