//! Architecture strings for freshly trained models, e.g.
//! `conv12x5,relu,pool2,conv24x5,relu,pool2,flatten,linear100,relu,linear`.
//!
//! Tokens: `conv<out>x<kernel>[s<stride>][p<pad>]`, `pool<window>[s<stride>]`,
//! `relu`, `flatten`, `linear<out>`, and a bare `linear` sized to the class
//! count.

use anyhow::{bail, Result};
use heatmap_eval::netcore::Model;
use rand::Rng;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ArchLayer {
    Conv {
        out: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
    },
    Pool {
        window: usize,
        stride: usize,
    },
    Relu,
    Flatten,
    Linear(Option<usize>),
}

/// Splits `s` at the first occurrence of `tag`, parsing the tail as a number.
fn suffix(s: &str, tag: char) -> Result<(&str, Option<usize>)> {
    match s.split_once(tag) {
        None => Ok((s, None)),
        Some((head, tail)) => Ok((head, Some(number(tail)?))),
    }
}

fn number(s: &str) -> Result<usize> {
    s.parse()
        .map_err(|_| anyhow::anyhow!("expected a number, got {s:?}"))
}

fn token(tok: &str) -> Result<ArchLayer> {
    if tok == "relu" {
        return Ok(ArchLayer::Relu);
    }
    if tok == "flatten" {
        return Ok(ArchLayer::Flatten);
    }
    if let Some(rest) = tok.strip_prefix("linear") {
        return Ok(ArchLayer::Linear(if rest.is_empty() {
            None
        } else {
            Some(number(rest)?)
        }));
    }
    if let Some(rest) = tok.strip_prefix("pool") {
        let (window, stride) = suffix(rest, 's')?;
        let window = number(window)?;
        return Ok(ArchLayer::Pool {
            window,
            stride: stride.unwrap_or(window),
        });
    }
    if let Some(rest) = tok.strip_prefix("conv") {
        let (rest, padding) = suffix(rest, 'p')?;
        let (rest, stride) = suffix(rest, 's')?;
        let Some((out, kernel)) = rest.split_once('x') else {
            bail!("conv layer {tok:?} needs `<out>x<kernel>`");
        };
        return Ok(ArchLayer::Conv {
            out: number(out)?,
            kernel: number(kernel)?,
            stride: stride.unwrap_or(1),
            padding: padding.unwrap_or(0),
        });
    }
    bail!("unknown layer token {tok:?}")
}

pub fn parse_arch(spec: &str) -> Result<Vec<ArchLayer>> {
    let layers = spec
        .split(',')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(|t| token(t).map_err(|e| e.context(format!("in architecture {spec:?}"))))
        .collect::<Result<Vec<_>>>()?;
    if layers.is_empty() {
        bail!("empty architecture");
    }
    Ok(layers)
}

/// Builds a randomly initialized model for `[C, H, W]` inputs.
pub fn build_model<R: Rng + ?Sized>(
    spec: &str,
    input_shape: &[usize],
    classes: usize,
    rng: &mut R,
) -> Result<Model> {
    let mut b = Model::builder(input_shape.to_vec());
    for layer in parse_arch(spec)? {
        b = match layer {
            ArchLayer::Conv {
                out,
                kernel,
                stride,
                padding,
            } => b.conv2d(out, kernel, stride, padding),
            ArchLayer::Pool { window, stride } => b.maxpool(window, stride),
            ArchLayer::Relu => b.relu(),
            ArchLayer::Flatten => b.flatten(),
            ArchLayer::Linear(n) => b.linear(n.unwrap_or(classes)),
        };
    }
    let model = b.build(rng)?;
    if model.num_classes() != classes {
        bail!(
            "architecture ends with {} outputs but the dataset has {classes} classes",
            model.num_classes()
        );
    }
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::DEFAULT_ARCH;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn parses_tokens() {
        assert_eq!(
            parse_arch("conv8x3s2p1, pool2, pool3s1, linear, linear7").unwrap(),
            [
                ArchLayer::Conv { out: 8, kernel: 3, stride: 2, padding: 1 },
                ArchLayer::Pool { window: 2, stride: 2 },
                ArchLayer::Pool { window: 3, stride: 1 },
                ArchLayer::Linear(None),
                ArchLayer::Linear(Some(7)),
            ]
        );
        for bad in ["", "conv8", "convAx3", "pool", "dropout", "linearx"] {
            assert!(parse_arch(bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn default_arch_builds_for_mnist() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let m = build_model(DEFAULT_ARCH, &[1, 28, 28], 10, &mut rng).unwrap();
        assert_eq!(m.num_classes(), 10);
        assert!(build_model(DEFAULT_ARCH, &[1, 27, 27], 10, &mut rng).is_err());
        assert!(build_model("flatten,linear3", &[1, 2, 2], 10, &mut rng).is_err());
    }
}
