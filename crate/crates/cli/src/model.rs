//! Trained model containers: `CFG`, optional `NET` and `PCA`, a `GMM` or
//! `KMS` codebook and, after training, the `SVM` bank.

use std::path::Path;

use anyhow::{bail, Context, Result};
use texturebank::classifier::SvmBank;
use texturebank::container::{tag, Container, Section};
use texturebank::encoder::persist::{gmm_from_section, gmm_section, kmeans_from_section, kmeans_section, pca_from_section, pca_section};
use texturebank::encoder::{Codebook, Encoder, PcaModel};
use texturebank::filterbank::{NetSpec, SIFT_DIM};

use crate::config::{EncoderChoice, ExtractorChoice, PipelineConfig};
use crate::features::Extraction;
use crate::io::{read, write_atomic};

#[derive(Debug, Clone)]
pub struct Model {
    pub config: PipelineConfig,
    pub net: Option<NetSpec>,
    pub encoder: Encoder,
    pub svm: Option<SvmBank>,
}

impl Model {
    pub fn to_container(&self) -> Result<Container> {
        let mut c = Container::new();
        c.push(Section::new(tag("CFG"), self.config.to_text().into_bytes()));
        if let Some(net) = &self.net {
            c.push(Section::new(tag("NET"), net.to_bytes()?));
        }
        if let Some(p) = &self.encoder.pca {
            c.push(pca_section(p));
        }
        c.push(match &self.encoder.codebook {
            Codebook::Fisher(g) => gmm_section(g),
            Codebook::Vlad(k) | Codebook::Bow(k) => kmeans_section(k),
        });
        if let Some(svm) = &self.svm {
            c.push(svm.to_section()?);
        }
        Ok(c)
    }

    /// Rebuilds a model, checking that every stage's dimensions chain.
    pub fn from_container(c: &Container) -> Result<Self> {
        let cfg_text = match c.get("CFG") {
            Some(s) => String::from_utf8(s.payload.clone()).context("CFG section is not UTF-8")?,
            None => bail!("model has no CFG section"),
        };
        let config = PipelineConfig::from_text(&cfg_text).context("model CFG section")?;
        let net = c.get("NET").map(|s| NetSpec::from_bytes(&s.payload)).transpose()?;
        let pca: Option<PcaModel> = c.get("PCA").map(pca_from_section).transpose()?;
        let codebook = match config.encoder {
            EncoderChoice::Fv => match c.get("GMM") {
                Some(s) => Codebook::Fisher(gmm_from_section(s)?),
                None => bail!("fv model has no GMM section"),
            },
            EncoderChoice::Vlad | EncoderChoice::Bow => {
                let km = match c.get("KMS") {
                    Some(s) => kmeans_from_section(s)?,
                    None => bail!("{} model has no KMS section", config.encoder.name()),
                };
                if config.encoder == EncoderChoice::Vlad { Codebook::Vlad(km) } else { Codebook::Bow(km) }
            }
        };
        let encoder = Encoder { pca, codebook, config: config.encoding.clone() };
        let svm = c.get("SVM").map(SvmBank::from_section).transpose()?;
        let model = Self { config, net, encoder, svm };
        model.validate()?;
        Ok(model)
    }

    fn codebook_dim(&self) -> usize {
        match &self.encoder.codebook {
            Codebook::Fisher(g) => g.dim(),
            Codebook::Vlad(k) | Codebook::Bow(k) => k.dim,
        }
    }

    fn validate(&self) -> Result<()> {
        if let Some(p) = &self.encoder.pca {
            if p.output_dim != self.codebook_dim() {
                bail!("PCA outputs {} dims but the codebook expects {}", p.output_dim, self.codebook_dim());
            }
        }
        if let ExtractorChoice::Sift(_) = self.config.extractor {
            if self.encoder.input_dim() != SIFT_DIM {
                bail!("encoder expects {}-dim input but dense SIFT yields {SIFT_DIM}", self.encoder.input_dim());
            }
        }
        if let Some(svm) = &self.svm {
            if svm.dim != self.encoder.output_len() {
                bail!("SVM bank has dimension {} but the encoder outputs {}", svm.dim, self.encoder.output_len());
            }
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_atomic(path, &self.to_container()?.to_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let c = Container::from_bytes(&read(path)?).with_context(|| format!("loading model {}", path.display()))?;
        Self::from_container(&c).with_context(|| format!("model {}", path.display()))
    }

    pub fn extraction(&self) -> Result<Extraction> {
        match (&self.config.extractor, &self.net) {
            (ExtractorChoice::Net { tap, .. }, Some(net)) => {
                Extraction::from_net(&self.config, net.clone(), *tap, &net.to_bytes()?)
            }
            (ExtractorChoice::Net { .. }, None) => bail!("net model has no NET section"),
            _ => Extraction::from_config(&self.config),
        }
    }

    pub fn svm(&self) -> Result<&SvmBank> {
        self.svm.as_ref().context("model has no SVM section; run train")
    }
}
