use std::fmt;
use std::str::FromStr;

use super::{cmd_align, cmd_distill, cmd_eval, cmd_gen, cmd_teach, cmd_train, PipelineConfig, PriorChoice, Run, Strategy};
use crate::error::{Error, Result};
use crate::metrics::{compare_report, Comparison};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Ladder {
    Table2,
    Table3,
    Table4,
    Table6,
    Noise,
}

impl Ladder {
    pub const ALL: [Ladder; 5] = [Ladder::Table2, Ladder::Table3, Ladder::Table4, Ladder::Table6, Ladder::Noise];

    pub fn name(self) -> &'static str {
        match self {
            Ladder::Table2 => "table2",
            Ladder::Table3 => "table3",
            Ladder::Table4 => "table4",
            Ladder::Table6 => "table6",
            Ladder::Noise => "noise",
        }
    }

    /// `(label, strategy, prior, noise ratio)` of every system, baseline first.
    pub fn systems(self, config: &PipelineConfig) -> Vec<(String, Strategy, PriorChoice, f64)> {
        let sys = |label: &str, s, p| (label.to_string(), s, p, 0.0);
        match self {
            Ladder::Table2 => vec![sys("NAT-raw", Strategy::Raw, PriorChoice::None), sys("NAT-KD", Strategy::Kd, PriorChoice::None)],
            Ladder::Table3 => vec![
                sys("KD", Strategy::Kd, PriorChoice::None),
                sys("+WAD", Strategy::Kd, PriorChoice::Wad),
                sys("+SDD", Strategy::Kd, PriorChoice::Sdd),
                sys("+Both", Strategy::Kd, PriorChoice::Both),
            ],
            Ladder::Table4 => vec![
                sys("KD", Strategy::Kd, PriorChoice::None),
                sys("Mix", Strategy::Mix, PriorChoice::None),
                sys("Tagged Mix", Strategy::TaggedMix, PriorChoice::None),
                sys("Curriculum", Strategy::Curriculum, PriorChoice::None),
                sys("+Both", Strategy::Kd, PriorChoice::Both),
            ],
            Ladder::Table6 => vec![
                sys("NAT-raw", Strategy::Raw, PriorChoice::None),
                sys("NAT-KD", Strategy::Kd, PriorChoice::None),
                sys("+Both", Strategy::Kd, PriorChoice::Both),
            ],
            Ladder::Noise => config
                .experiment
                .noise_ratios
                .iter()
                .map(|&r| (format!("noise {r}"), Strategy::Kd, PriorChoice::Both, r))
                .collect(),
        }
    }
}

impl fmt::Display for Ladder {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Ladder {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ladder::ALL
            .into_iter()
            .find(|l| l.name() == s)
            .ok_or_else(|| Error::invalid(format!("unknown ladder {s:?}; expected one of table2, table3, table4, table6, noise")))
    }
}

/// Runs every stage for each system of the ladder and writes the comparison.
pub fn cmd_experiment(config: &PipelineConfig, ladder: Ladder) -> Result<Comparison> {
    let mut run = Run::new(config)?;
    let base = run.config.clone();
    let systems = ladder.systems(&base);
    if systems.is_empty() {
        return Err(Error::invalid(format!("ladder {ladder} has no systems")));
    }
    cmd_gen(&mut run)?;
    cmd_align(&mut run)?;
    cmd_teach(&mut run)?;
    cmd_distill(&mut run)?;

    let configure = |strategy, prior, noise: f64| {
        let mut c = base.clone();
        c.system = None;
        c.distill.strategy = strategy;
        c.prior.kind = prior;
        c.noise.ratio = noise;
        c
    };
    let needs_sdd = systems.iter().any(|s| s.2.uses_sdd());
    let lists_raw = systems.iter().any(|s| s.1 == Strategy::Raw && s.2 == PriorChoice::None);
    if needs_sdd && !lists_raw {
        run.config = configure(Strategy::Raw, PriorChoice::None, 0.0);
        cmd_train(&mut run)?;
    }
    let mut reports = Vec::with_capacity(systems.len());
    for (label, strategy, prior, noise) in systems {
        run.config = configure(strategy, prior, noise);
        cmd_train(&mut run)?;
        reports.push((label, cmd_eval(&mut run)?));
    }
    run.config = base;

    let comparison = compare_report(&reports)?;
    let (json, txt) = run.layout.comparison(ladder);
    run.write(&json, serde_json::to_string_pretty(&comparison)?.as_bytes())?;
    run.write(&txt, comparison.render().as_bytes())?;
    run.save_manifest()?;
    Ok(comparison)
}
