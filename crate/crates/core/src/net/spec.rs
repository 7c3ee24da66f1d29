//! Declarative architecture description and its text format.
//!
//! ```text
//! # comments start with '#'
//! input 64 64 1                 # height width channels
//! conv filters=16 kernel=3 stride=1 bn=on act=relu
//! conv filters=32 kernel=3 stride=2 bn=on act=relu pool=2
//! classes 2
//! min_resolution 8
//! ```
//!
//! Convolutions use zero "same" padding of `kernel / 2`, so kernels must be
//! odd. The head (global average pooling followed by a single dense layer
//! to `classes` outputs) is implicit. A `dense units=N` line parses but is
//! always rejected by [`NetworkSpec::validate`].

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::nn::conv_output_size;

pub const DEFAULT_MIN_RESOLUTION: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Identity,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvSpec {
    pub filters: usize,
    pub kernel: usize,
    pub stride: usize,
    pub batch_norm: bool,
    pub activation: Activation,
    /// Non-overlapping max pool window applied after the activation.
    pub pool: Option<usize>,
}

impl ConvSpec {
    pub fn new(filters: usize, kernel: usize, stride: usize) -> Self {
        ConvSpec {
            filters,
            kernel,
            stride,
            batch_norm: true,
            activation: Activation::Relu,
            pool: None,
        }
    }

    pub fn with_pool(mut self, size: usize) -> Self {
        self.pool = Some(size);
        self
    }

    pub fn padding(&self) -> usize {
        self.kernel / 2
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LayerSpec {
    Conv(ConvSpec),
    /// Fully connected layer inside the body. Never valid: dense layers
    /// would discard the spatial layout the activation maps rely on.
    Dense {
        units: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NetworkSpec {
    pub input_height: usize,
    pub input_width: usize,
    pub input_channels: usize,
    pub layers: Vec<LayerSpec>,
    pub classes: usize,
    pub min_resolution: usize,
}

impl NetworkSpec {
    /// 64x64 grayscale input, four conv layers, 32 maps of 16x16, two classes.
    pub fn toy() -> Self {
        NetworkSpec {
            input_height: 64,
            input_width: 64,
            input_channels: 1,
            layers: vec![
                LayerSpec::Conv(ConvSpec::new(16, 3, 1)),
                LayerSpec::Conv(ConvSpec::new(32, 3, 2)),
                LayerSpec::Conv(ConvSpec::new(32, 3, 2)),
                LayerSpec::Conv(ConvSpec::new(32, 3, 1)),
            ],
            classes: 2,
            min_resolution: DEFAULT_MIN_RESOLUTION,
        }
    }

    /// Full-resolution layout: 512x512 RGB in, strides removed from the
    /// first and third conv layers, four 2x2 pools bringing the maps to
    /// 32x32, and a final 3x3 stride-1 conv with 1024 kernels.
    pub fn paper_shaped() -> Self {
        let c = |f, k, s| LayerSpec::Conv(ConvSpec::new(f, k, s));
        let cp = |f, k, s| LayerSpec::Conv(ConvSpec::new(f, k, s).with_pool(2));
        NetworkSpec {
            input_height: 512,
            input_width: 512,
            input_channels: 3,
            layers: vec![
                c(32, 5, 1),
                cp(32, 3, 1),
                c(64, 5, 1),
                cp(64, 3, 1),
                c(128, 3, 1),
                c(128, 3, 1),
                cp(128, 3, 1),
                c(256, 3, 1),
                c(256, 3, 1),
                cp(256, 3, 1),
                c(1024, 3, 1),
            ],
            classes: 2,
            min_resolution: DEFAULT_MIN_RESOLUTION,
        }
    }

    pub fn conv_layers(&self) -> impl Iterator<Item = &ConvSpec> {
        self.layers.iter().filter_map(|l| match l {
            LayerSpec::Conv(c) => Some(c),
            LayerSpec::Dense { .. } => None,
        })
    }

    /// Spatial size after every conv block, without validating.
    pub fn resolutions(&self) -> Result<Vec<(usize, usize)>> {
        let (mut h, mut w) = (self.input_height, self.input_width);
        let mut out = Vec::new();
        for (i, conv) in self.conv_layers().enumerate() {
            let p = conv.padding();
            h = conv_output_size(h, conv.kernel, conv.stride, p).ok_or_else(|| {
                Error::Spec(format!(
                    "conv layer {i}: kernel {} does not fit height {h}",
                    conv.kernel
                ))
            })?;
            w = conv_output_size(w, conv.kernel, conv.stride, p).ok_or_else(|| {
                Error::Spec(format!(
                    "conv layer {i}: kernel {} does not fit width {w}",
                    conv.kernel
                ))
            })?;
            if let Some(s) = conv.pool {
                if s == 0 || s > h || s > w {
                    return Err(Error::Spec(format!(
                        "conv layer {i}: pool {s} does not fit {h}x{w}"
                    )));
                }
                h /= s;
                w /= s;
            }
            out.push((h, w));
        }
        Ok(out)
    }

    /// `(K, u, v)` of the final feature maps.
    pub fn feature_shape(&self) -> Result<(usize, usize, usize)> {
        let last = self
            .conv_layers()
            .last()
            .ok_or_else(|| Error::Spec("no conv layers".into()))?;
        let &(u, v) = self.resolutions()?.last().expect("at least one conv layer");
        Ok((last.filters, u, v))
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_height == 0 || self.input_width == 0 || self.input_channels == 0 {
            return Err(Error::Spec("input dimensions must be positive".into()));
        }
        if self.classes < 2 {
            return Err(Error::Spec(format!(
                "need at least 2 classes, got {}",
                self.classes
            )));
        }
        if self.min_resolution == 0 {
            return Err(Error::Spec("min_resolution must be positive".into()));
        }
        for (i, layer) in self.layers.iter().enumerate() {
            match layer {
                LayerSpec::Dense { units } => {
                    return Err(Error::Spec(format!(
                        "layer {i}: dense layer ({units} units) before the classifier; \
                         only the single post-GAP classifier may be fully connected"
                    )))
                }
                LayerSpec::Conv(c) => {
                    if c.filters == 0 || c.stride == 0 {
                        return Err(Error::Spec(format!(
                            "layer {i}: filters and stride must be positive"
                        )));
                    }
                    if c.kernel % 2 == 0 {
                        return Err(Error::Spec(format!(
                            "layer {i}: kernel {} must be odd for same padding",
                            c.kernel
                        )));
                    }
                }
            }
        }
        let (_, u, v) = self.feature_shape()?;
        if u < self.min_resolution || v < self.min_resolution {
            return Err(Error::Spec(format!(
                "final feature maps are {u}x{v}, below the minimum resolution {}",
                self.min_resolution
            )));
        }
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "input {} {} {}",
            self.input_height, self.input_width, self.input_channels
        );
        for layer in &self.layers {
            match layer {
                LayerSpec::Conv(c) => {
                    let _ = write!(
                        s,
                        "conv filters={} kernel={} stride={} bn={} act={}",
                        c.filters,
                        c.kernel,
                        c.stride,
                        if c.batch_norm { "on" } else { "off" },
                        match c.activation {
                            Activation::Relu => "relu",
                            Activation::Identity => "none",
                        }
                    );
                    if let Some(p) = c.pool {
                        let _ = write!(s, " pool={p}");
                    }
                    s.push('\n');
                }
                LayerSpec::Dense { units } => {
                    let _ = writeln!(s, "dense units={units}");
                }
            }
        }
        let _ = writeln!(s, "classes {}", self.classes);
        let _ = writeln!(s, "min_resolution {}", self.min_resolution);
        s
    }

    /// Parses the text format. Structural validity is checked separately.
    pub fn parse(text: &str) -> Result<Self> {
        let mut input = None;
        let mut layers = Vec::new();
        let mut classes = None;
        let mut min_resolution = DEFAULT_MIN_RESOLUTION;
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |msg: String| Error::Spec(format!("line {}: {msg}", lineno + 1));
            let mut words = line.split_whitespace();
            let keyword = words.next().expect("non-empty line");
            let rest: Vec<&str> = words.collect();
            let number = |w: &str| {
                w.parse::<usize>()
                    .map_err(|_| err(format!("expected an integer, got {w:?}")))
            };
            match keyword {
                "input" => {
                    if rest.len() != 3 {
                        return Err(err("input takes height width channels".into()));
                    }
                    input = Some((number(rest[0])?, number(rest[1])?, number(rest[2])?));
                }
                "classes" => {
                    let [n] = rest[..] else {
                        return Err(err("classes takes one integer".into()));
                    };
                    classes = Some(number(n)?);
                }
                "min_resolution" => {
                    let [n] = rest[..] else {
                        return Err(err("min_resolution takes one integer".into()));
                    };
                    min_resolution = number(n)?;
                }
                "conv" => layers.push(LayerSpec::Conv(parse_conv(&rest).map_err(err)?)),
                "dense" => {
                    let mut units = None;
                    for kv in &rest {
                        match kv.split_once('=') {
                            Some(("units", v)) => units = Some(number(v)?),
                            _ => return Err(err(format!("unknown dense option {kv:?}"))),
                        }
                    }
                    layers.push(LayerSpec::Dense {
                        units: units.ok_or_else(|| err("dense needs units=".into()))?,
                    });
                }
                other => return Err(err(format!("unknown keyword {other:?}"))),
            }
        }
        let (h, w, c) = input.ok_or_else(|| Error::Spec("missing `input` line".into()))?;
        Ok(NetworkSpec {
            input_height: h,
            input_width: w,
            input_channels: c,
            layers,
            classes: classes.ok_or_else(|| Error::Spec("missing `classes` line".into()))?,
            min_resolution,
        })
    }
}

fn parse_conv(options: &[&str]) -> std::result::Result<ConvSpec, String> {
    let mut filters = None;
    let mut kernel = None;
    let mut stride = 1;
    let mut batch_norm = true;
    let mut activation = Activation::Relu;
    let mut pool = None;
    for kv in options {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| format!("expected key=value, got {kv:?}"))?;
        let int = || {
            v.parse::<usize>()
                .map_err(|_| format!("{k}: expected an integer, got {v:?}"))
        };
        match k {
            "filters" => filters = Some(int()?),
            "kernel" => kernel = Some(int()?),
            "stride" => stride = int()?,
            "pool" => pool = Some(int()?),
            "bn" => {
                batch_norm = match v {
                    "on" | "true" => true,
                    "off" | "false" => false,
                    _ => return Err(format!("bn: expected on/off, got {v:?}")),
                }
            }
            "act" => {
                activation = match v {
                    "relu" => Activation::Relu,
                    "none" => Activation::Identity,
                    _ => return Err(format!("act: expected relu/none, got {v:?}")),
                }
            }
            _ => return Err(format!("unknown conv option {k:?}")),
        }
    }
    Ok(ConvSpec {
        filters: filters.ok_or("conv needs filters=")?,
        kernel: kernel.ok_or("conv needs kernel=")?,
        stride,
        batch_norm,
        activation,
        pool,
    })
}
