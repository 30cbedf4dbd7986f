//! Plain-text configuration files: `[section]` headers with `key = value`
//! lines, `#` comments. Used for pipeline settings and blur scene specs.
//! Unknown sections or keys are errors.

use std::path::Path;

use crate::detail::DetailParams;
use crate::error::{Error, Result};
use crate::image::EnhanceParams;
use crate::pipeline::PipelineConfig;
use crate::synth::{BlurSceneSpec, KernelSpec, Rect};

/// One parsed `[section]` with its `key = value` entries.
#[derive(Debug, Clone)]
pub struct Section {
    pub name: String,
    /// Trailing word in the header, e.g. the id in `[kernel k0]`.
    pub arg: Option<String>,
    pub entries: Vec<(String, String, usize)>,
    pub line: usize,
}

/// Parse the section/key-value layout without interpreting the contents.
pub fn parse_sections(text: &str) -> Result<Vec<Section>> {
    let mut sections: Vec<Section> = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = match raw.find('#') {
            Some(pos) => &raw[..pos],
            None => raw,
        }
        .trim();
        if line.is_empty() {
            continue;
        }
        if let Some(header) = line.strip_prefix('[') {
            let header = header.strip_suffix(']').ok_or(Error::Config {
                line: Some(line_no),
                detail: format!("unterminated section header '{raw}'"),
            })?;
            let mut parts = header.split_whitespace();
            let name = parts.next().unwrap_or("").to_string();
            if name.is_empty() {
                return Err(Error::Config {
                    line: Some(line_no),
                    detail: "empty section name".into(),
                });
            }
            let arg = parts.next().map(str::to_string);
            if parts.next().is_some() {
                return Err(Error::Config {
                    line: Some(line_no),
                    detail: format!("too many words in section header '{raw}'"),
                });
            }
            sections.push(Section {
                name,
                arg,
                entries: Vec::new(),
                line: line_no,
            });
        } else if let Some((key, value)) = line.split_once('=') {
            let section = sections.last_mut().ok_or(Error::Config {
                line: Some(line_no),
                detail: "key before any [section] header".into(),
            })?;
            section
                .entries
                .push((key.trim().to_string(), value.trim().to_string(), line_no));
        } else {
            return Err(Error::Config {
                line: Some(line_no),
                detail: format!("expected 'key = value', got '{line}'"),
            });
        }
    }
    Ok(sections)
}

fn parse_num<T: std::str::FromStr>(key: &str, value: &str, line: usize) -> Result<T> {
    value.parse().map_err(|_| Error::Config {
        line: Some(line),
        detail: format!("cannot parse {key} = '{value}'"),
    })
}

fn parse_bool(key: &str, value: &str, line: usize) -> Result<bool> {
    match value {
        "true" | "yes" | "on" | "1" => Ok(true),
        "false" | "no" | "off" | "0" => Ok(false),
        _ => Err(Error::Config {
            line: Some(line),
            detail: format!("cannot parse {key} = '{value}' as bool"),
        }),
    }
}

/// Apply `[pipeline]`, `[flow]`, `[detail]` and `[enhance]` sections onto a
/// pipeline configuration. Scene sections are rejected here.
pub fn apply_pipeline_sections(cfg: &mut PipelineConfig, sections: &[Section]) -> Result<()> {
    for section in sections {
        match section.name.as_str() {
            "pipeline" => {
                for (key, value, line) in &section.entries {
                    let line = *line;
                    match key.as_str() {
                        "iters" => cfg.outer_iterations = parse_num(key, value, line)?,
                        "em_iters" => cfg.gmm.em_iterations = parse_num(key, value, line)?,
                        "gd_iters" => cfg.gmm.gd_iterations = parse_num(key, value, line)?,
                        "lambda" => cfg.gmm.lambda = parse_num(key, value, line)?,
                        "omega" => cfg.gmm.omega = parse_num(key, value, line)?,
                        "mu" => cfg.gmm.mu = parse_num(key, value, line)?,
                        "alpha" => cfg.gmm.alpha = parse_num(key, value, line)?,
                        "sigma_init" => cfg.gmm.sigma_init = parse_num(key, value, line)?,
                        "sigma_d" => cfg.gmm.sigma_d = parse_num(key, value, line)?,
                        "sigma_l" => cfg.gmm.sigma_l = parse_num(key, value, line)?,
                        "variance_floor" => cfg.gmm.variance_floor = parse_num(key, value, line)?,
                        "s1" => cfg.patch.s1 = parse_num(key, value, line)?,
                        "s2" => cfg.patch.s2 = parse_num(key, value, line)?,
                        "stride" => cfg.patch.stride = parse_num(key, value, line)?,
                        "detail" => {
                            if parse_bool(key, value, line)? {
                                cfg.detail.get_or_insert_with(DetailParams::default);
                            } else {
                                cfg.detail = None;
                            }
                        }
                        other => {
                            return Err(Error::Config {
                                line: Some(line),
                                detail: format!("unknown pipeline key '{other}'"),
                            })
                        }
                    }
                }
            }
            "flow" => {
                for (key, value, line) in &section.entries {
                    let line = *line;
                    match key.as_str() {
                        "levels" => cfg.flow.pyramid_levels = parse_num(key, value, line)?,
                        "scale" => cfg.flow.pyramid_scale = parse_num(key, value, line)?,
                        "window" => cfg.flow.window_size = parse_num(key, value, line)?,
                        "iterations" => {
                            cfg.flow.iterations_per_level = parse_num(key, value, line)?
                        }
                        "poly_n" => cfg.flow.poly_neighborhood = parse_num(key, value, line)?,
                        "poly_sigma" => cfg.flow.poly_sigma = parse_num(key, value, line)?,
                        other => {
                            return Err(Error::Config {
                                line: Some(line),
                                detail: format!("unknown flow key '{other}'"),
                            })
                        }
                    }
                }
            }
            "detail" => {
                let d = cfg.detail.get_or_insert_with(DetailParams::default);
                for (key, value, line) in &section.entries {
                    let line = *line;
                    match key.as_str() {
                        "tau" => d.tau = parse_num(key, value, line)?,
                        "eta" => d.eta = parse_num(key, value, line)?,
                        "bf_sigma_d" => d.bf_sigma_d = parse_num(key, value, line)?,
                        "bf_sigma_l" => d.bf_sigma_l = parse_num(key, value, line)?,
                        "bf_radius" => d.bf_radius = parse_num(key, value, line)?,
                        "allow_out_of_range" => {
                            d.allow_out_of_range = parse_bool(key, value, line)?
                        }
                        other => {
                            return Err(Error::Config {
                                line: Some(line),
                                detail: format!("unknown detail key '{other}'"),
                            })
                        }
                    }
                }
            }
            "enhance" => {
                let e = cfg.enhance.get_or_insert_with(EnhanceParams::default);
                for (key, value, line) in &section.entries {
                    let line = *line;
                    match key.as_str() {
                        "gain" => e.gain = parse_num(key, value, line)?,
                        "bias" => e.bias = parse_num(key, value, line)?,
                        "gamma" => e.gamma = parse_num(key, value, line)?,
                        other => {
                            return Err(Error::Config {
                                line: Some(line),
                                detail: format!("unknown enhance key '{other}'"),
                            })
                        }
                    }
                }
            }
            other => {
                return Err(Error::Config {
                    line: Some(section.line),
                    detail: format!("unknown section '[{other}]' in pipeline config"),
                })
            }
        }
    }
    Ok(())
}

/// Load a pipeline configuration file on top of the defaults.
pub fn load_pipeline_config(path: impl AsRef<Path>) -> Result<PipelineConfig> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::FileNotFound {
            path: path.to_path_buf(),
        },
        _ => Error::Io {
            path: path.to_path_buf(),
            source: e,
        },
    })?;
    let mut cfg = PipelineConfig::default();
    apply_pipeline_sections(&mut cfg, &parse_sections(&text)?)?;
    Ok(cfg)
}

/// Build a blur scene from `[scene]`, `[kernel ID]` and `[region]` sections.
pub fn scene_from_sections(sections: &[Section]) -> Result<BlurSceneSpec> {
    let mut kernels: Vec<(String, KernelSpec)> = Vec::new();
    let mut regions: Vec<(Rect, String)> = Vec::new();
    let mut default_kernel = None;
    let mut noise_sigma = 0.0;

    for section in sections {
        match section.name.as_str() {
            "scene" => {
                for (key, value, line) in &section.entries {
                    let line = *line;
                    match key.as_str() {
                        "noise_sigma" => noise_sigma = parse_num(key, value, line)?,
                        "default_kernel" => default_kernel = Some(value.clone()),
                        other => {
                            return Err(Error::Config {
                                line: Some(line),
                                detail: format!("unknown scene key '{other}'"),
                            })
                        }
                    }
                }
            }
            "kernel" => {
                let id = section.arg.clone().ok_or(Error::Config {
                    line: Some(section.line),
                    detail: "kernel section needs an id: [kernel NAME]".into(),
                })?;
                kernels.push((id, kernel_from_entries(&section.entries, section.line)?));
            }
            "region" => {
                let mut rect = None;
                let mut kernel = None;
                for (key, value, line) in &section.entries {
                    let line = *line;
                    match key.as_str() {
                        "rect" => {
                            let parts: Vec<&str> = value.split_whitespace().collect();
                            if parts.len() != 4 {
                                return Err(Error::Config {
                                    line: Some(line),
                                    detail: "rect needs 'x y w h'".into(),
                                });
                            }
                            rect = Some(Rect {
                                x: parse_num("rect.x", parts[0], line)?,
                                y: parse_num("rect.y", parts[1], line)?,
                                w: parse_num("rect.w", parts[2], line)?,
                                h: parse_num("rect.h", parts[3], line)?,
                            });
                        }
                        "kernel" => kernel = Some(value.clone()),
                        other => {
                            return Err(Error::Config {
                                line: Some(line),
                                detail: format!("unknown region key '{other}'"),
                            })
                        }
                    }
                }
                match (rect, kernel) {
                    (Some(r), Some(k)) => regions.push((r, k)),
                    _ => {
                        return Err(Error::Config {
                            line: Some(section.line),
                            detail: "region needs both rect and kernel".into(),
                        })
                    }
                }
            }
            other => {
                return Err(Error::Config {
                    line: Some(section.line),
                    detail: format!("unknown section '[{other}]' in scene config"),
                })
            }
        }
    }

    let default_kernel = default_kernel.ok_or(Error::Config {
        line: None,
        detail: "scene config needs default_kernel".into(),
    })?;
    Ok(BlurSceneSpec {
        kernels,
        regions,
        default_kernel,
        noise_sigma,
    })
}

fn kernel_from_entries(
    entries: &[(String, String, usize)],
    header_line: usize,
) -> Result<KernelSpec> {
    let mut map = std::collections::BTreeMap::new();
    for (key, value, line) in entries {
        map.insert(key.as_str(), (value.as_str(), *line));
    }
    let (kind, _) = *map.get("type").ok_or(Error::Config {
        line: Some(header_line),
        detail: "kernel needs a type".into(),
    })?;
    let take = |key: &str| -> Result<f64> {
        let (value, line) = *map.get(key).ok_or(Error::Config {
            line: Some(header_line),
            detail: format!("kernel type '{kind}' needs '{key}'"),
        })?;
        parse_num(key, value, line)
    };
    let spec = match kind {
        "linear" => KernelSpec::Linear {
            length: take("length")?,
            angle: take("angle")?,
        },
        "circular" => KernelSpec::Circular {
            radius: take("radius")?,
            arc: take("arc")?,
        },
        "gaussian" => KernelSpec::Gaussian {
            sigma: take("sigma")?,
        },
        "zoom" => KernelSpec::Zoom {
            strength: take("strength")?,
            center: (take("center_x")?, take("center_y")?),
        },
        "identity" => KernelSpec::Identity,
        other => {
            return Err(Error::Config {
                line: Some(header_line),
                detail: format!("unknown kernel type '{other}'"),
            })
        }
    };
    let known: &[&str] = match kind {
        "linear" => &["type", "length", "angle"],
        "circular" => &["type", "radius", "arc"],
        "gaussian" => &["type", "sigma"],
        "zoom" => &["type", "strength", "center_x", "center_y"],
        _ => &["type"],
    };
    for (key, (_, line)) in &map {
        if !known.contains(key) {
            return Err(Error::Config {
                line: Some(*line),
                detail: format!("unknown key '{key}' for kernel type '{kind}'"),
            });
        }
    }
    Ok(spec)
}

/// Load a scene spec file.
pub fn load_scene(path: impl AsRef<Path>) -> Result<BlurSceneSpec> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::FileNotFound {
            path: path.to_path_buf(),
        },
        _ => Error::Io {
            path: path.to_path_buf(),
            source: e,
        },
    })?;
    scene_from_sections(&parse_sections(&text)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pipeline_config_roundtrip() {
        let text = "
# experiment settings
[pipeline]
iters = 3
lambda = 0.8
stride = 2
detail = false

[flow]
levels = 4
poly_sigma = 1.2

[enhance]
gamma = 1.5
";
        let mut cfg = PipelineConfig::default();
        apply_pipeline_sections(&mut cfg, &parse_sections(text).unwrap()).unwrap();
        assert_eq!(cfg.outer_iterations, 3);
        assert_eq!(cfg.gmm.lambda, 0.8);
        assert_eq!(cfg.patch.stride, 2);
        assert!(cfg.detail.is_none());
        assert_eq!(cfg.flow.pyramid_levels, 4);
        assert_eq!(cfg.flow.poly_sigma, 1.2);
        assert_eq!(cfg.enhance.unwrap().gamma, 1.5);
    }

    #[test]
    fn unknown_key_rejected() {
        let text = "[pipeline]\nbogus = 1\n";
        let mut cfg = PipelineConfig::default();
        let err = apply_pipeline_sections(&mut cfg, &parse_sections(text).unwrap()).unwrap_err();
        assert!(err.to_string().contains("bogus"), "{err}");
    }

    #[test]
    fn unknown_section_rejected() {
        let text = "[shenanigans]\nx = 1\n";
        let mut cfg = PipelineConfig::default();
        assert!(apply_pipeline_sections(&mut cfg, &parse_sections(text).unwrap()).is_err());
    }

    #[test]
    fn key_outside_section_rejected() {
        assert!(parse_sections("x = 1\n").is_err());
    }

    #[test]
    fn scene_parses() {
        let text = "
[scene]
noise_sigma = 10
default_kernel = base

[kernel base]
type = gaussian
sigma = 2.0

[kernel streak]
type = linear
length = 15
angle = 0.5

[region]
rect = 4 4 8 8
kernel = streak
";
        let scene = scene_from_sections(&parse_sections(text).unwrap()).unwrap();
        assert_eq!(scene.noise_sigma, 10.0);
        assert_eq!(scene.default_kernel, "base");
        assert_eq!(scene.kernels.len(), 2);
        assert_eq!(scene.regions.len(), 1);
        assert_eq!(
            scene.regions[0].0,
            Rect {
                x: 4,
                y: 4,
                w: 8,
                h: 8
            }
        );
        assert!(matches!(
            scene.kernels[1].1,
            KernelSpec::Linear { length, angle } if length == 15.0 && angle == 0.5
        ));
    }

    #[test]
    fn scene_requires_default_kernel() {
        let text = "[scene]\nnoise_sigma = 5\n";
        assert!(scene_from_sections(&parse_sections(text).unwrap()).is_err());
    }

    #[test]
    fn kernel_with_missing_param_rejected() {
        let text = "
[scene]
default_kernel = k

[kernel k]
type = linear
length = 5
";
        assert!(scene_from_sections(&parse_sections(text).unwrap()).is_err());
    }

    #[test]
    fn comments_and_blanks_ignored() {
        let text = "\n# top comment\n[pipeline]\niters = 2 # trailing\n\n";
        let sections = parse_sections(text).unwrap();
        assert_eq!(sections.len(), 1);
        assert_eq!(sections[0].entries, vec![("iters".into(), "2".into(), 4)]);
    }
}
