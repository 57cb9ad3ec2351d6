//! Named configurations for the standard experiments.

use crate::cases::{LIGHT_BETA1_SWEEP, LIGHT_INTENSITIES};

use super::config::{CaseSection, CoefficientsSection, RunConfig, TargetSection, WeightsSection};

pub const BENCHMARK_EPSILONS: [f64; 3] = [1.0, 0.1, 0.01];
pub const BENCHMARK_MESHES: [usize; 4] = [4, 8, 16, 32];
/// Mesh of the presets without a `_n` suffix.
pub const DEFAULT_BENCHMARK_CELLS: usize = 32;

#[derive(Debug, Clone, PartialEq)]
pub struct Preset {
    pub name: String,
    pub description: String,
    pub config: RunConfig,
}

fn case(kind: &str, name: &str) -> CaseSection {
    CaseSection {
        kind: kind.to_string(),
        name: Some(name.to_string()),
        ..CaseSection::default()
    }
}

fn beta_label(beta1: f64) -> String {
    format!("{beta1:e}")
}

fn light(kind: &str, short: &str, what: &str, intensity: f64, beta1: f64) -> Preset {
    let name = format!("{short}_I{intensity}_beta{}", beta_label(beta1));
    Preset {
        description: format!("{what}, assigned intensity {intensity}, control weight {beta1:e}"),
        config: RunConfig {
            case: case(kind, &name),
            weights: WeightsSection {
                beta1: Some(beta1),
                ..WeightsSection::default()
            },
            target: TargetSection {
                amplitude: Some(intensity),
                ..TargetSection::default()
            },
            ..RunConfig::default()
        },
        name,
    }
}

pub fn presets() -> Vec<Preset> {
    let mut out = Vec::new();
    for eps in BENCHMARK_EPSILONS {
        for n in std::iter::once(None).chain(BENCHMARK_MESHES.map(Some)) {
            let name = match n {
                None => format!("benchmark_eps{eps}"),
                Some(n) => format!("benchmark_eps{eps}_n{n}"),
            };
            let cells = n.unwrap_or(DEFAULT_BENCHMARK_CELLS);
            out.push(Preset {
                description: format!("manufactured advection-diffusion, epsilon {eps}, {cells} cells"),
                config: RunConfig {
                    case: CaseSection {
                        cells: n.map(|n| vec![n]),
                        ..case("benchmark", &name)
                    },
                    coefficients: CoefficientsSection {
                        epsilon: Some(eps),
                        ..CoefficientsSection::default()
                    },
                    ..RunConfig::default()
                },
                name,
            });
        }
    }
    let light_kinds = [
        ("light_distributed", "light_dist", "1D distributed light"),
        ("light_concentrated_1d", "light_conc_1d", "1D boundary light"),
        ("light_concentrated_2d", "light_conc_2d", "2D boundary light"),
    ];
    for (kind, short, what) in light_kinds {
        for intensity in LIGHT_INTENSITIES {
            for beta1 in LIGHT_BETA1_SWEEP {
                out.push(light(kind, short, what, intensity, beta1));
            }
        }
    }
    out.push(Preset {
        name: "transport".into(),
        description: "catheter drug release into pulsatile channel flow".into(),
        config: RunConfig {
            case: case("transport", "transport"),
            ..RunConfig::default()
        },
    });
    out
}

pub fn preset(name: &str) -> Option<Preset> {
    presets().into_iter().find(|p| p.name == name)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cases::Problem;
    use crate::io::config::{build_case, parse_config_str, to_toml};
    use crate::optimize::RecoveryReference;

    #[test]
    fn names_unique_and_configs_valid() {
        let all = presets();
        assert_eq!(all.len(), 15 + 24 + 1);
        let mut names: Vec<&str> = all.iter().map(|p| p.name.as_str()).collect();
        names.sort();
        names.dedup();
        assert_eq!(names.len(), all.len());
        for p in &all {
            assert_eq!(parse_config_str(&to_toml(&p.config)).unwrap(), p.config, "{}", p.name);
        }
        assert!(preset("light_conc_1d_I15_beta1e-6").is_some());
        assert!(preset("benchmark_eps0.01_n32").is_some());
        assert!(preset("nope").is_none());
    }

    #[test]
    fn preset_values() {
        let base = std::path::Path::new(".");
        let b = build_case(&preset("benchmark_eps1").unwrap().config, base).unwrap();
        assert_eq!((b.t_final, b.weights.beta1, b.weights.beta2), (1.0, 1.0, 1.0));
        assert_eq!(b.grid.cells()[0], DEFAULT_BENCHMARK_CELLS);
        let l = build_case(&preset("light_conc_1d_I5_beta1e-6").unwrap().config, base).unwrap();
        let Problem::Light(p) = &l.problem else {
            panic!("not a light case")
        };
        assert_eq!((p.gamma, p.light_diffusion, l.weights.beta1), (1.5e-2, 4e-3, 1e-6));
        assert_eq!(l.reference, Some(RecoveryReference::Scalar(5.0)));
    }
}
