use crate::error::{Error, Result};

/// Architecture hyper-parameters. The defaults reproduce the full-size model.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelConfig {
    pub frame_size: usize,
    pub channels: usize,
    pub kernel1_taps: usize,
    pub kernel2_taps: usize,
    pub pool_size: usize,
    /// Width of both latent dense layers; equals `frame_size / pool_size`
    /// because the first latent layer acts along the pooled time axis.
    pub latent_units: usize,
    pub saaf_segments: usize,
    /// SAAF breakpoints span `[-saaf_extent, saaf_extent]`.
    pub saaf_extent: f32,
    pub dropout_rate: f32,
    pub sample_rate: u32,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            frame_size: 1024,
            channels: 128,
            kernel1_taps: 64,
            kernel2_taps: 128,
            pool_size: 16,
            latent_units: 64,
            saaf_segments: 25,
            saaf_extent: 1.0,
            dropout_rate: 0.25,
            sample_rate: 16_000,
        }
    }
}

impl ModelConfig {
    /// Small configuration used for gradient verification.
    pub fn tiny() -> Self {
        Self {
            frame_size: 64,
            channels: 8,
            kernel1_taps: 16,
            kernel2_taps: 32,
            pool_size: 4,
            latent_units: 16,
            ..Self::default()
        }
    }

    /// Full-size frames with fewer channels.
    pub fn with_channels(channels: usize) -> Self {
        Self {
            channels,
            ..Self::default()
        }
    }

    /// Width of the two inner layers of the back-end dense stack
    /// (`channels → channels → hidden → hidden → channels`).
    pub fn saaf_hidden(&self) -> usize {
        (self.channels / 2).max(1)
    }

    pub fn pooled_len(&self) -> usize {
        self.frame_size / self.pool_size
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("frame_size", self.frame_size),
            ("channels", self.channels),
            ("kernel1_taps", self.kernel1_taps),
            ("kernel2_taps", self.kernel2_taps),
            ("pool_size", self.pool_size),
            ("latent_units", self.latent_units),
            ("saaf_segments", self.saaf_segments),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be >= 1")));
            }
        }
        if !self.frame_size.is_multiple_of(self.pool_size) {
            return Err(Error::Config(format!(
                "frame_size {} is not divisible by pool_size {}",
                self.frame_size, self.pool_size
            )));
        }
        if self.latent_units != self.pooled_len() {
            return Err(Error::Config(format!(
                "latent_units {} must equal frame_size / pool_size = {}",
                self.latent_units,
                self.pooled_len()
            )));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::Config(format!(
                "dropout_rate {} must lie in [0, 1)",
                self.dropout_rate
            )));
        }
        if !(self.saaf_extent.is_finite() && self.saaf_extent > 0.0) {
            return Err(Error::Config("saaf_extent must be finite and > 0".into()));
        }
        if self.sample_rate == 0 {
            return Err(Error::Config("sample_rate must be > 0".into()));
        }
        Ok(())
    }

    /// `key=value` lines, in a fixed order.
    pub fn to_header(&self) -> String {
        format!(
            "frame_size={}\nchannels={}\nkernel1_taps={}\nkernel2_taps={}\npool_size={}\n\
             latent_units={}\nsaaf_segments={}\nsaaf_extent={}\ndropout_rate={}\nsample_rate={}\n",
            self.frame_size,
            self.channels,
            self.kernel1_taps,
            self.kernel2_taps,
            self.pool_size,
            self.latent_units,
            self.saaf_segments,
            self.saaf_extent,
            self.dropout_rate,
            self.sample_rate
        )
    }

    /// Applies one `key=value` setting. Returns `Ok(false)` for unknown keys.
    pub fn set(&mut self, key: &str, value: &str) -> Result<bool> {
        fn num<V: std::str::FromStr>(key: &str, value: &str) -> Result<V> {
            value
                .trim()
                .parse()
                .map_err(|_| Error::Config(format!("{key}: cannot parse {value:?}")))
        }
        match key.trim() {
            "frame_size" => self.frame_size = num(key, value)?,
            "channels" => self.channels = num(key, value)?,
            "kernel1_taps" => self.kernel1_taps = num(key, value)?,
            "kernel2_taps" => self.kernel2_taps = num(key, value)?,
            "pool_size" => self.pool_size = num(key, value)?,
            "latent_units" => self.latent_units = num(key, value)?,
            "saaf_segments" => self.saaf_segments = num(key, value)?,
            "saaf_extent" => self.saaf_extent = num(key, value)?,
            "dropout_rate" => self.dropout_rate = num(key, value)?,
            "sample_rate" => self.sample_rate = num(key, value)?,
            _ => return Ok(false),
        }
        Ok(true)
    }

    /// Parses a header produced by [`Self::to_header`]; every field is required.
    pub fn from_header(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        let mut seen = 0usize;
        for line in text.lines().filter(|l| !l.trim().is_empty()) {
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("header line without '=': {line:?}")))?;
            if !cfg.set(k, v)? {
                return Err(Error::Config(format!("unknown header key {k:?}")));
            }
            seen += 1;
        }
        if seen != 10 {
            return Err(Error::Config(format!(
                "header has {seen} fields, expected 10"
            )));
        }
        cfg.validate()?;
        Ok(cfg)
    }
}
