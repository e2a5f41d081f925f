//! Batch tables: radius bounds, decision-variable counts and timings.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bisect::{self, BisectionResult};
use crate::conditions::{self, ConditionId};
use crate::io::{self, IoError};
use crate::lpv::{self, SystemSpec};
use crate::sdpfeas::{SolveOptions, Status};

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("unknown system '{0}'")]
    UnknownSystem(String),
    #[error("system '{name}': {source}")]
    System { name: String, source: IoError },
    #[error("timing needs at least one repetition")]
    NoRepetitions,
    #[error(transparent)]
    Io(#[from] IoError),
    #[error(transparent)]
    Lpv(#[from] lpv::LpvError),
    #[error(transparent)]
    Condition(#[from] conditions::ConditionError),
}

/// A system given inline or as a path relative to the config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SystemRef {
    Path { path: String },
    Inline(SystemSpec),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BisectionJob {
    pub system: String,
    pub condition: ConditionId,
    pub lo: f64,
    pub hi: f64,
    #[serde(default = "default_tol")]
    pub tol: f64,
}

fn default_tol() -> f64 {
    1e-3
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingRun {
    pub condition: ConditionId,
    pub gamma: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingJob {
    pub system: String,
    #[serde(default = "default_reps")]
    pub repetitions: usize,
    pub runs: Vec<TimingRun>,
}

fn default_reps() -> usize {
    5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportConfig {
    pub schema_version: u32,
    pub systems: BTreeMap<String, SystemRef>,
    #[serde(default)]
    pub bisections: Vec<BisectionJob>,
    /// `(N, n_x, n_u, n_y)` tuples for the count table.
    #[serde(default)]
    pub counts: Vec<(usize, usize, usize, usize)>,
    #[serde(default)]
    pub timing: Option<TimingJob>,
}

impl ReportConfig {
    pub fn load(path: &Path) -> Result<Self, ReportError> {
        Self::from_json(&io::read_text(path)?)
    }

    pub fn from_json(text: &str) -> Result<Self, ReportError> {
        let c: ReportConfig = serde_json::from_str(text).map_err(IoError::from)?;
        io::check_version(c.schema_version)?;
        Ok(c)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    fn resolve(&self, name: &str, base: &Path) -> Result<SystemSpec, ReportError> {
        match self.systems.get(name) {
            None => Err(ReportError::UnknownSystem(name.to_string())),
            Some(SystemRef::Inline(s)) => Ok(s.clone()),
            Some(SystemRef::Path { path }) => {
                let p = base.join(path);
                SystemSpec::load(&p).map_err(|source| ReportError::System {
                    name: name.to_string(),
                    source,
                })
            }
        }
    }
}

/// The example four-state family and its three-copy composition, with
/// every condition bisected and the four timing pairs.
pub fn case_study_config() -> ReportConfig {
    let mut systems = BTreeMap::new();
    systems.insert("case".to_string(), SystemRef::Inline(lpv::case_study_spec(1.0)));
    systems.insert("composed".to_string(), SystemRef::Inline(lpv::composed_case_study_spec(1.0)));
    let job = |condition, lo, hi| BisectionJob {
        system: "case".into(),
        condition,
        lo,
        hi,
        tol: 1e-3,
    };
    use ConditionId::*;
    let bisections = vec![
        job(PolyqsL12, 0.1, 2.0),
        job(PolyqsL13, 0.1, 2.0),
        job(PolyqsL14, 0.1, 2.0),
        job(DetThm1, 1.0, 8.0),
        job(DetRem1, 1.0, 8.0),
        job(StabThm3, 0.5, 2.0),
        job(SynthT43, 0.5, 2.0),
        job(SynthT44, 0.5, 2.0),
        job(SynthDaafouz, 0.5, 2.0),
    ];
    let run = |condition, gamma| TimingRun { condition, gamma };
    ReportConfig {
        schema_version: io::SCHEMA_VERSION,
        systems,
        bisections,
        counts: vec![(2, 4, 1, 1), (8, 12, 3, 3)],
        timing: Some(TimingJob {
            system: "composed".into(),
            repetitions: 5,
            runs: vec![
                run(PolyqsL12, 0.5),
                run(PolyqsL13, 0.5),
                run(PolyqsL14, 0.5),
                run(DetThm1, 4.0),
                run(DetRem1, 4.0),
                run(SynthT43, 1.0),
                run(SynthT44, 1.0),
            ],
        }),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BisectionRow {
    pub system: String,
    pub condition: ConditionId,
    pub result: Option<BisectionResult>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CountRow {
    pub condition: ConditionId,
    pub dims: (usize, usize, usize, usize),
    pub count: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingRow {
    pub condition: ConditionId,
    pub gamma: f64,
    pub num_scalars: usize,
    pub statuses: Vec<Status>,
    pub seconds: Vec<f64>,
    pub median_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ordering {
    pub faster: ConditionId,
    pub slower: ConditionId,
    pub holds: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub schema_version: u32,
    pub bisections: Vec<BisectionRow>,
    pub counts: Vec<CountRow>,
    pub timing: Vec<TimingRow>,
    pub orderings: Vec<Ordering>,
}

/// Pairs whose median times are compared when both appear in the timing job.
pub const ORDERINGS: [(ConditionId, ConditionId); 4] = [
    (ConditionId::PolyqsL14, ConditionId::PolyqsL12),
    (ConditionId::PolyqsL14, ConditionId::PolyqsL13),
    (ConditionId::DetThm1, ConditionId::DetRem1),
    (ConditionId::SynthT43, ConditionId::SynthT44),
];

pub fn median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    if n == 0 {
        f64::NAN
    } else if n % 2 == 1 {
        s[n / 2]
    } else {
        0.5 * (s[n / 2 - 1] + s[n / 2])
    }
}

/// Median wall time of `reps` solves of each run, measured sequentially.
pub fn time_runs(family: &SystemSpec, runs: &[TimingRun], reps: usize, opts: &SolveOptions) -> Result<Vec<TimingRow>, ReportError> {
    if reps == 0 {
        return Err(ReportError::NoRepetitions);
    }
    runs.iter()
        .map(|r| {
            let sys = family.with_gamma(r.gamma).build()?;
            let eps = conditions::default_eps(&sys, r.condition);
            let mut statuses = Vec::new();
            let mut seconds = Vec::new();
            let mut num_scalars = 0;
            for _ in 0..reps {
                let a = conditions::analyze(r.condition, &sys, eps, opts)?;
                statuses.push(a.outcome.status);
                seconds.push(a.seconds);
                num_scalars = a.num_scalars;
            }
            Ok(TimingRow {
                condition: r.condition,
                gamma: r.gamma,
                num_scalars,
                statuses,
                median_seconds: median(&seconds),
                seconds,
            })
        })
        .collect()
}

pub fn orderings(rows: &[TimingRow]) -> Vec<Ordering> {
    let find = |c| rows.iter().find(|r| r.condition == c);
    ORDERINGS
        .iter()
        .filter_map(|&(f, s)| {
            let (a, b) = (find(f)?, find(s)?);
            Some(Ordering {
                faster: f,
                slower: s,
                holds: a.median_seconds < b.median_seconds,
            })
        })
        .collect()
}

/// Runs every job in `config`; relative system paths resolve against `base`.
/// Bisections run concurrently, timings sequentially.
pub fn run_report(config: &ReportConfig, base: &Path, opts: &SolveOptions) -> Result<Report, ReportError> {
    let families = config
        .bisections
        .iter()
        .map(|j| config.resolve(&j.system, base))
        .collect::<Result<Vec<_>, _>>()?;
    let timing_family = match &config.timing {
        Some(t) => Some(config.resolve(&t.system, base)?),
        None => None,
    };

    let bisections = std::thread::scope(|scope| {
        let handles: Vec<_> = config
            .bisections
            .iter()
            .zip(&families)
            .map(|(job, fam)| scope.spawn(move || bisect::bisect_gamma(job.condition, fam, job.lo, job.hi, job.tol, opts)))
            .collect();
        handles
            .into_iter()
            .zip(&config.bisections)
            .map(|(h, job)| {
                let out = h.join().expect("bisection thread panicked");
                BisectionRow {
                    system: job.system.clone(),
                    condition: job.condition,
                    error: out.as_ref().err().map(|e| e.to_string()),
                    result: out.ok(),
                }
            })
            .collect::<Vec<_>>()
    });

    let mut counts = Vec::new();
    for &dims in &config.counts {
        for c in ConditionId::ALL {
            counts.push(CountRow {
                condition: c,
                dims,
                count: conditions::count_decision_vars(c, dims.0, dims.1, dims.2, dims.3).ok(),
            });
        }
    }

    let timing = match (&config.timing, &timing_family) {
        (Some(t), Some(fam)) => time_runs(fam, &t.runs, t.repetitions, opts)?,
        _ => Vec::new(),
    };
    let orderings = orderings(&timing);
    Ok(Report {
        schema_version: io::SCHEMA_VERSION,
        bisections,
        counts,
        timing,
        orderings,
    })
}

impl Report {
    pub fn bisection_csv(&self) -> String {
        let mut s = String::from("system,condition,gamma_star,lo,hi,evaluations,error\n");
        for r in &self.bisections {
            match &r.result {
                Some(b) => writeln!(
                    s,
                    "{},{},{},{:.6},{:.6},{},",
                    r.system,
                    r.condition,
                    b.formatted(),
                    b.bracket.0,
                    b.bracket.1,
                    b.evaluations.len()
                ),
                None => writeln!(s, "{},{},,,,,\"{}\"", r.system, r.condition, r.error.clone().unwrap_or_default().replace('"', "'")),
            }
            .unwrap();
        }
        s
    }

    pub fn bisection_md(&self) -> String {
        let mut s = String::from("| system | condition | γ⋆ |\n|---|---|---|\n");
        for r in &self.bisections {
            let g = r.result.as_ref().map_or_else(|| format!("error: {}", r.error.clone().unwrap_or_default()), |b| b.formatted());
            writeln!(s, "| {} | {} | {} |", r.system, r.condition, g).unwrap();
        }
        s
    }

    pub fn counts_csv(&self) -> String {
        let mut s = String::from("condition,N,n_x,n_u,n_y,count\n");
        for r in &self.counts {
            let (n, nx, nu, ny) = r.dims;
            let c = r.count.map_or_else(|| "n/a".into(), |c| c.to_string());
            writeln!(s, "{},{n},{nx},{nu},{ny},{c}", r.condition).unwrap();
        }
        s
    }

    pub fn counts_md(&self) -> String {
        let mut dims: Vec<_> = self.counts.iter().map(|r| r.dims).collect();
        dims.dedup();
        let mut s = String::from("| condition |");
        for (n, nx, nu, ny) in &dims {
            write!(s, " N={n}, n_x={nx}, n_u={nu}, n_y={ny} |").unwrap();
        }
        s.push_str("\n|---|");
        s.push_str(&"---|".repeat(dims.len()));
        s.push('\n');
        for c in ConditionId::ALL {
            let cells: Vec<_> = dims
                .iter()
                .map(|d| {
                    self.counts
                        .iter()
                        .find(|r| r.condition == c && r.dims == *d)
                        .and_then(|r| r.count)
                        .map_or_else(|| "n/a".into(), |v| v.to_string())
                })
                .collect();
            if !cells.is_empty() {
                writeln!(s, "| {c} | {} |", cells.join(" | ")).unwrap();
            }
        }
        s
    }

    pub fn timing_csv(&self) -> String {
        let mut s = String::from("condition,gamma,num_scalars,median_seconds,repetitions,statuses\n");
        for r in &self.timing {
            let st: Vec<_> = r.statuses.iter().map(|x| format!("{x:?}").to_lowercase()).collect();
            writeln!(s, "{},{},{},{:.6},{},{}", r.condition, r.gamma, r.num_scalars, r.median_seconds, r.seconds.len(), st.join(";")).unwrap();
        }
        s
    }

    pub fn timing_md(&self) -> String {
        let mut s = String::from("| condition | γ | scalars | median time [s] |\n|---|---|---|---|\n");
        for r in &self.timing {
            writeln!(s, "| {} | {} | {} | {:.4} |", r.condition, r.gamma, r.num_scalars, r.median_seconds).unwrap();
        }
        if !self.orderings.is_empty() {
            s.push_str("\n| ordering | holds |\n|---|---|\n");
            for o in &self.orderings {
                writeln!(s, "| {} < {} | {} |", o.faster, o.slower, o.holds).unwrap();
            }
        }
        s
    }

    /// Writes the tables and `report.json` into `dir`, returning the paths.
    pub fn write(&self, dir: &Path) -> Result<Vec<PathBuf>, ReportError> {
        std::fs::create_dir_all(dir).map_err(|e| IoError::File {
            path: dir.display().to_string(),
            source: e,
        })?;
        let files = [
            ("gamma_star.csv", self.bisection_csv()),
            ("gamma_star.md", self.bisection_md()),
            ("decision_vars.csv", self.counts_csv()),
            ("decision_vars.md", self.counts_md()),
            ("timing.csv", self.timing_csv()),
            ("timing.md", self.timing_md()),
            ("report.json", serde_json::to_string_pretty(self).expect("report serializes")),
        ];
        let mut out = Vec::new();
        for (name, text) in files {
            let p = dir.join(name);
            io::write_text(&p, &text)?;
            out.push(p);
        }
        Ok(out)
    }
}
