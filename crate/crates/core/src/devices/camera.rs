use super::render::render_plate;
use super::{bench::locations::CAMERA_NEST, unsupported, DeviceKind, Durations, SharedBench};
use crate::imaging::{PpmError, RgbImage};
use crate::protocol::{About, ActionError, Args, Device, Outcome};
use crate::scene::{Perturbation, SceneConfig};
use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

/// Response key holding the base64-encoded binary PPM.
pub const IMAGE_KEY: &str = "image";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CameraConfig {
    pub noise_sigma: f64,
    /// Bounds of the uniform per-capture pose jitter.
    pub max_shift_px: f64,
    pub max_rotation_deg: f64,
    pub seed: u64,
    pub scene: SceneConfig,
}

impl Default for CameraConfig {
    fn default() -> Self {
        Self { noise_sigma: 2.0, max_shift_px: 5.0, max_rotation_deg: 2.0, seed: 0, scene: SceneConfig::default() }
    }
}

/// Fixed camera over the camera nest. The pose jitter and the sensor noise of
/// the `n`-th capture depend only on the seed and `n`.
pub struct Camera {
    name: String,
    bench: SharedBench,
    config: CameraConfig,
    duration_s: f64,
    captures: u64,
}

impl Camera {
    pub fn new(name: impl Into<String>, bench: SharedBench, config: &CameraConfig, durations: &Durations) -> Self {
        Self { name: name.into(), bench, config: config.clone(), duration_s: durations.camera_s, captures: 0 }
    }

    fn capture(&mut self) -> Result<Outcome, ActionError> {
        let (plate_id, wells) = {
            let bench = self.bench.lock();
            let plate = bench.plate_at(CAMERA_NEST).ok_or_else(|| ActionError::new("no plate in camera nest"))?;
            (plate.plate_id.clone(), plate.well_colors())
        };
        let index = self.captures;
        self.captures += 1;
        let mut rng = ChaCha8Rng::seed_from_u64(self.config.seed ^ index.wrapping_mul(0x9E37_79B9_7F4A_7C15));
        let jitter = |rng: &mut ChaCha8Rng, bound: f64| if bound > 0.0 { rng.gen_range(-bound..=bound) } else { 0.0 };
        let perturbation = Perturbation {
            dx: jitter(&mut rng, self.config.max_shift_px),
            dy: jitter(&mut rng, self.config.max_shift_px),
            angle_deg: jitter(&mut rng, self.config.max_rotation_deg),
        };
        let rendered = render_plate(&wells, &self.config.scene, perturbation, self.config.noise_sigma, rng.gen());
        Ok(Outcome::new(super::duration(self.duration_s))
            .with(IMAGE_KEY, B64.encode(rendered.image.to_ppm()))
            .with("plate_id", plate_id)
            .with("capture_index", index)
            .with("width", rendered.image.width())
            .with("height", rendered.image.height()))
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ImageDecodeError {
    #[error("response carries no `{IMAGE_KEY}` string")]
    Missing,
    #[error("invalid base64: {0}")]
    Base64(#[from] base64::DecodeError),
    #[error(transparent)]
    Ppm(#[from] PpmError),
}

/// Extracts the image from a capture response's data.
pub fn decode_image(data: &Args) -> Result<(RgbImage, Vec<u8>), ImageDecodeError> {
    let text = data.get(IMAGE_KEY).and_then(Value::as_str).ok_or(ImageDecodeError::Missing)?;
    let ppm = B64.decode(text)?;
    Ok((RgbImage::from_ppm(&ppm)?, ppm))
}

impl Device for Camera {
    fn about(&self) -> About {
        About {
            name: self.name.clone(),
            model: "Overhead camera (simulated)".into(),
            actions: DeviceKind::Camera.actions().iter().map(|a| a.to_string()).collect(),
        }
    }

    fn handle(&mut self, action: &str, _args: &Args) -> Result<Outcome, ActionError> {
        match action {
            "capture" => self.capture(),
            other => Err(unsupported(other)),
        }
    }

    fn snapshot(&self) -> Value {
        json!({ "captures": self.captures })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::color::{ColorRgb, RatioVector};
    use crate::devices::{Bench, PlateState, ReservoirBank, WellContent};

    fn setup(config: CameraConfig, with_plate: bool) -> Camera {
        let mut bench = Bench::default_topology(ReservoirBank::empty(100.0));
        if with_plate {
            let mut plate = PlateState::new("p1", CAMERA_NEST);
            plate.wells[5] = Some(WellContent { ratios: RatioVector::new(0.0, 0.0, 0.0, 0.0).unwrap(), mixed: ColorRgb::new(10, 200, 30) });
            bench.plates.insert("p1".into(), plate);
            bench.occupancy.insert(CAMERA_NEST.into(), Some("p1".into()));
        }
        Camera::new("camera", SharedBench::new(bench), &config, &Durations::default())
    }

    #[test]
    fn capture_returns_a_decodable_ppm() {
        let mut cam = setup(CameraConfig::default(), true);
        let out = cam.handle("capture", &Args::new()).unwrap();
        assert_eq!(out.sim_duration_s, 10.0);
        let (img, ppm) = decode_image(&out.data).unwrap();
        assert!(ppm.starts_with(b"P6\n1280 960\n255\n"));
        assert_eq!((img.width(), img.height()), (1280, 960));
    }

    #[test]
    fn noiseless_still_camera_is_byte_identical() {
        let cfg = CameraConfig { noise_sigma: 0.0, max_shift_px: 0.0, max_rotation_deg: 0.0, ..Default::default() };
        let mut cam = setup(cfg, true);
        let a = cam.handle("capture", &Args::new()).unwrap();
        let b = cam.handle("capture", &Args::new()).unwrap();
        assert_eq!(a.data[IMAGE_KEY], b.data[IMAGE_KEY]);
    }

    #[test]
    fn captures_are_reproducible_per_seed() {
        let a = setup(CameraConfig::default(), true).handle("capture", &Args::new()).unwrap();
        let b = setup(CameraConfig::default(), true).handle("capture", &Args::new()).unwrap();
        assert_eq!(a.data[IMAGE_KEY], b.data[IMAGE_KEY]);
    }

    #[test]
    fn capture_without_plate_fails() {
        let mut cam = setup(CameraConfig::default(), false);
        assert!(cam.handle("capture", &Args::new()).is_err());
    }
}
