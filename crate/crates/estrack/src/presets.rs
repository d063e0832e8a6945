use crate::config::{parse_config, ConfigError, ExperimentConfig};

pub struct Preset {
    pub name: &'static str,
    pub summary: &'static str,
    pub json: &'static str,
}

pub const PRESETS: &[Preset] = &[
    Preset {
        name: "sec6_exponential",
        summary: "exponential ES on the oscillating quadratic map, t in [0, 50]",
        json: include_str!("../presets/sec6_exponential.json"),
    },
    Preset {
        name: "sec6_asymptotic",
        summary: "asymptotic ES (beta = 1, r = 2, m = 0.75) on the same map",
        json: include_str!("../presets/sec6_asymptotic.json"),
    },
    Preset {
        name: "constant_quadratic_case1",
        summary: "asymptotic ES on a fixed-center quadratic with an omega sweep",
        json: include_str!("../presets/constant_quadratic_case1.json"),
    },
    Preset {
        name: "constant_quadratic_case1_exponential",
        summary: "exponential ES on a fixed-center quadratic with an omega sweep",
        json: include_str!("../presets/constant_quadratic_case1_exponential.json"),
    },
];

pub fn find(name: &str) -> Option<&'static Preset> {
    PRESETS.iter().find(|p| p.name == name)
}

pub fn load(name: &str) -> Option<Result<ExperimentConfig, ConfigError>> {
    find(name).map(|p| parse_config(p.json))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_preset_parses_under_its_own_name() {
        for p in PRESETS {
            let cfg = load(p.name).unwrap().unwrap();
            assert_eq!(cfg.name, p.name);
        }
    }
}
