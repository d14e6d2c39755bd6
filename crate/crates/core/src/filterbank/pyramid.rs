//! Multi-scale extraction over a scale ladder.

use log::warn;

use crate::error::{Error, Result};
use crate::field::FeatureField;
use crate::filterbank::net::{NetSpec, TapPoint};
use crate::filterbank::sift::{dense_sift, SiftConfig};
use crate::image::{rescale_image, ImagePlane};

/// Anything that turns an image into one dense descriptor field.
pub trait DenseExtractor: Send + Sync {
    fn extract(&self, img: &ImagePlane) -> Result<FeatureField>;

    /// Short identifier recorded alongside extracted features.
    fn describe(&self) -> String;
}

#[derive(Debug, Clone, Default)]
pub struct SiftExtractor {
    pub config: SiftConfig,
}

impl DenseExtractor for SiftExtractor {
    fn extract(&self, img: &ImagePlane) -> Result<FeatureField> {
        dense_sift(img, &self.config)
    }

    fn describe(&self) -> String {
        format!("dsift(support={},step={})", self.config.support, self.config.step)
    }
}

#[derive(Debug, Clone)]
pub struct NetExtractor {
    pub net: NetSpec,
    pub tap: TapPoint,
}

impl DenseExtractor for NetExtractor {
    fn extract(&self, img: &ImagePlane) -> Result<FeatureField> {
        self.net.run(img, self.tap)
    }

    fn describe(&self) -> String {
        format!("net(tap={})", self.tap)
    }
}

/// One field per ladder factor, each tagged with its scale. Scales at which
/// the extractor yields no cells are skipped with a warning.
pub fn extract_pyramid(
    img: &ImagePlane,
    extractor: &dyn DenseExtractor,
    ladder: &[f64],
) -> Result<Vec<FeatureField>> {
    if ladder.is_empty() {
        return Err(Error::InvalidArgument("empty scale ladder".into()));
    }
    let mut fields = Vec::with_capacity(ladder.len());
    for &factor in ladder {
        let scaled = match rescale_image(img, factor) {
            Ok(s) => s,
            Err(Error::Degenerate(msg)) => {
                warn!("skipping scale {factor}: {msg}");
                continue;
            }
            Err(e) => return Err(e),
        };
        match extractor.extract(&scaled) {
            Ok(field) => fields.push(field.with_scale(factor as f32)?),
            Err(Error::EmptyField(msg)) | Err(Error::Degenerate(msg)) => {
                warn!("skipping scale {factor}: {msg}");
            }
            Err(e) => return Err(e),
        }
    }
    if fields.is_empty() {
        return Err(Error::EmptyField(format!(
            "no scale of the {}x{} image produced descriptor cells",
            img.width(),
            img.height()
        )));
    }
    Ok(fields)
}
