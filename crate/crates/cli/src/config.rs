//! Turns parsed flags into a fully resolved [`RunConfig`].

use std::path::PathBuf;

use kafgp::datasets::SwitchInput;
use kafgp::evaluation::{Algorithm, DEFAULT_PREFIXES, NO_PRUNING_THRESHOLD};
use kafgp::{KernelSpec, StepSize};

use crate::args::{CommandKind, Flags};
use crate::error::{CliError, CliResult};

/// Admission threshold for budgeted GPs unless `--admission-threshold` says otherwise.
pub const BUDGET_ADMISSION_THRESHOLD: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq)]
pub enum DataSource {
    KinLike { dim: usize },
    Sine { noise_std: f64 },
    Csv { path: PathBuf, dim: usize, header: bool },
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub command: CommandKind,
    pub spec: KernelSpec,
    pub algorithms: Vec<Algorithm>,
    pub data: DataSource,
    /// Training size (compare) or stream length (reconverge). `None` lets
    /// CSV runs use half the file.
    pub n: Option<usize>,
    pub n_test: Option<usize>,
    pub seed: u64,
    pub seeds: usize,
    pub eval_every: usize,
    pub switch_at: usize,
    pub switch_input: SwitchInput,
    pub smooth: usize,
    pub prefixes: Vec<usize>,
    pub grid: Vec<f64>,
    pub out: PathBuf,
    pub dump_state: bool,
    pub tol: Option<f64>,
    pub noise_mismatch: f64,
}

struct Defaults {
    lengthscale: f64,
    noise_var: f64,
    algs: &'static str,
    seeds: usize,
    n: Option<usize>,
}

fn defaults(command: CommandKind) -> Defaults {
    match command {
        CommandKind::Compare => Defaults {
            lengthscale: 0.5,
            noise_var: 0.5,
            algs: "gp,beta:0,beta:1,klms,knlms",
            seeds: 1,
            n: Some(1000),
        },
        CommandKind::Reconverge => Defaults {
            lengthscale: 1.0,
            noise_var: 0.01,
            algs: "gp,gp:100,klms,qklms,knlms,beta:0,beta:1",
            seeds: 5,
            n: Some(1000),
        },
        CommandKind::Uncertainty => Defaults {
            lengthscale: 1.0,
            noise_var: 0.1,
            algs: "gp,beta:0,beta:1",
            seeds: 1,
            n: None,
        },
        CommandKind::Verify => Defaults {
            lengthscale: 1.0,
            noise_var: 0.1,
            algs: "",
            seeds: 3,
            n: Some(500),
        },
    }
}

fn parse_num<T: std::str::FromStr>(what: &str, s: &str) -> CliResult<T> {
    s.trim()
        .parse()
        .map_err(|_| CliError::usage(format!("invalid {what}: {s:?}")))
}

/// Parses one `--algs` entry such as `beta:0.5` or `gp:200`. A bare `qklms`
/// uses `--quant-radius`, else `lengthscale`.
pub fn parse_algorithm(token: &str, flags: &Flags, lengthscale: f64) -> CliResult<Algorithm> {
    let token = token.trim();
    let (name, param) = match token.split_once(':') {
        Some((n, p)) => (n, Some(p)),
        None => (token, None),
    };
    let threshold_for = |budget: Option<usize>| {
        flags.admission_threshold.unwrap_or(if budget.is_some() {
            BUDGET_ADMISSION_THRESHOLD
        } else {
            NO_PRUNING_THRESHOLD
        })
    };
    let eta_flag = flags.eta.map_or(StepSize::NoiseMatched, StepSize::Fixed);
    Ok(match name {
        "gp" => {
            let budget = match param {
                Some(p) => Some(parse_num("gp budget", p)?),
                None => flags.budget,
            };
            Algorithm::Gp { budget, admission_threshold: threshold_for(budget) }
        }
        "klms" => Algorithm::Klms {
            eta: match param {
                Some(p) => StepSize::Fixed(parse_num("klms step size", p)?),
                None => eta_flag,
            },
        },
        "qklms" => Algorithm::Qklms {
            eta: eta_flag,
            quant_radius: match param {
                Some(p) => parse_num("quantization radius", p)?,
                None => flags.quant_radius.unwrap_or(lengthscale),
            },
        },
        "knlms" => Algorithm::Knlms {
            eta: flags.eta.unwrap_or(1.0),
            eps_reg: flags.eps_reg,
            coherence_mu0: match param {
                Some(p) => parse_num("coherence threshold", p)?,
                None => flags.coherence_mu0.unwrap_or(1.0),
            },
        },
        "beta" => Algorithm::Beta {
            beta: match param {
                Some(p) => parse_num("beta", p)?,
                None => flags.beta.unwrap_or(1.0),
            },
            coherence_mu0: flags.coherence_mu0,
        },
        _ => {
            return Err(CliError::usage(format!(
                "unknown algorithm {token:?} (expected gp, klms, qklms, knlms or beta)"
            )))
        }
    })
}

fn parse_grid(s: &str) -> CliResult<Vec<f64>> {
    let parts: Vec<&str> = s.split(':').collect();
    let [lo, hi, count] = parts[..] else {
        return Err(CliError::usage(format!("grid must be min:max:points, got {s:?}")));
    };
    let lo: f64 = parse_num("grid minimum", lo)?;
    let hi: f64 = parse_num("grid maximum", hi)?;
    let count: usize = parse_num("grid size", count)?;
    if count == 0 || !(hi >= lo) || !lo.is_finite() || !hi.is_finite() {
        return Err(CliError::usage(format!("bad grid {s:?}")));
    }
    if count == 1 {
        return Ok(vec![lo]);
    }
    let step = (hi - lo) / (count - 1) as f64;
    Ok((0..count).map(|i| lo + step * i as f64).collect())
}

impl RunConfig {
    pub fn resolve(command: CommandKind, flags: &Flags) -> CliResult<RunConfig> {
        let d = defaults(command);
        let mut spec = KernelSpec::gaussian(
            flags.kernel_lengthscale.unwrap_or(d.lengthscale),
            flags.kernel_variance.unwrap_or(1.0),
            flags.noise_var.unwrap_or(d.noise_var),
        );
        if let Some(j) = flags.jitter {
            spec = spec.with_jitter(j);
        }
        spec.validate()?;

        let algs = flags.algs.as_deref().unwrap_or(d.algs);
        let algorithms = algs
            .split(',')
            .filter(|t| !t.trim().is_empty())
            .map(|t| parse_algorithm(t, flags, spec.lengthscale))
            .collect::<CliResult<Vec<_>>>()?;
        if algorithms.is_empty() && command != CommandKind::Verify {
            return Err(CliError::usage("no algorithms given"));
        }
        for alg in &algorithms {
            alg.build(&spec)?;
        }

        if command == CommandKind::Reconverge && (flags.csv.is_some() || flags.gen.is_some()) {
            return Err(CliError::usage("reconverge generates its own switch stream; drop --csv/--gen"));
        }
        let data = match (&flags.csv, flags.gen.as_deref()) {
            (Some(path), _) => {
                if !path.is_file() {
                    return Err(CliError::usage(format!("CSV file not found: {}", path.display())));
                }
                let dim = flags
                    .dim
                    .ok_or_else(|| CliError::usage("--csv needs --dim"))?;
                DataSource::Csv { path: path.clone(), dim, header: flags.header }
            }
            (None, Some("kin-like")) => DataSource::KinLike { dim: flags.dim.unwrap_or(8) },
            (None, Some("sine")) => DataSource::Sine { noise_std: 0.1 },
            (None, Some(other)) => {
                return Err(CliError::usage(format!("unknown generator {other:?} (expected kin-like or sine)")))
            }
            (None, None) if command == CommandKind::Uncertainty => DataSource::Sine { noise_std: 0.1 },
            (None, None) => DataSource::KinLike { dim: flags.dim.unwrap_or(8) },
        };
        if command == CommandKind::Uncertainty {
            let one_d = match &data {
                DataSource::KinLike { dim } | DataSource::Csv { dim, .. } => *dim == 1,
                DataSource::Sine { .. } => true,
            };
            if !one_d {
                return Err(CliError::usage("uncertainty needs one-dimensional data"));
            }
        }

        let positive = |what: &str, v: Option<usize>| -> CliResult<Option<usize>> {
            match v {
                Some(0) => Err(CliError::usage(format!("{what} must be positive"))),
                v => Ok(v),
            }
        };
        let n = positive("--n", flags.n)?.or(match data {
            DataSource::Csv { .. } => None,
            _ => d.n,
        });
        let n_test = positive("--n-test", flags.n_test)?;
        let seeds = positive("--seeds", flags.seeds)?.unwrap_or(d.seeds);
        let eval_every = positive("--eval-every", flags.eval_every)?.unwrap_or(100);
        let smooth = positive("--smooth", flags.smooth)?.unwrap_or(20);
        let switch_at = flags.switch_at.unwrap_or(kafgp::datasets::DEFAULT_SWITCH_AT);

        let switch_input = match flags.switch_input.as_deref() {
            None | Some("source-window") => SwitchInput::SourceWindow,
            Some("output-history") => SwitchInput::OutputHistory,
            Some(other) => {
                return Err(CliError::usage(format!(
                    "unknown switch input {other:?} (expected source-window or output-history)"
                )))
            }
        };

        let prefixes = match &flags.prefixes {
            Some(s) => s
                .split(',')
                .map(|p| parse_num::<usize>("prefix size", p))
                .collect::<CliResult<Vec<_>>>()?,
            None => DEFAULT_PREFIXES.to_vec(),
        };
        if prefixes.is_empty() || prefixes.contains(&0) {
            return Err(CliError::usage("prefix sizes must be positive"));
        }
        let grid = parse_grid(flags.grid.as_deref().unwrap_or("-6:6:121"))?;

        if let Some(t) = flags.tol {
            if !(t > 0.0) {
                return Err(CliError::usage("--tol must be positive"));
            }
        }

        Ok(RunConfig {
            command,
            spec,
            algorithms,
            data,
            n,
            n_test,
            seed: flags.seed.unwrap_or(0),
            seeds,
            eval_every,
            switch_at,
            switch_input,
            smooth,
            prefixes,
            grid,
            out: flags.out.clone().unwrap_or_else(|| PathBuf::from(".")),
            dump_state: flags.dump_state,
            tol: flags.tol,
            noise_mismatch: flags.noise_mismatch.unwrap_or(0.0),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn flags() -> Flags {
        Flags::default()
    }

    fn parse(token: &str, f: &Flags) -> CliResult<Algorithm> {
        parse_algorithm(token, f, 1.0)
    }

    #[test]
    fn algorithm_tokens() {
        let f = flags();
        assert_eq!(parse("gp", &f).unwrap(), Algorithm::exact_gp());
        assert_eq!(
            parse("gp:50", &f).unwrap(),
            Algorithm::Gp { budget: Some(50), admission_threshold: BUDGET_ADMISSION_THRESHOLD }
        );
        assert_eq!(parse("klms", &f).unwrap(), Algorithm::Klms { eta: StepSize::NoiseMatched });
        assert_eq!(parse("klms:0.2", &f).unwrap(), Algorithm::Klms { eta: StepSize::Fixed(0.2) });
        assert_eq!(parse("knlms", &f).unwrap(), Algorithm::knlms_default());
        assert_eq!(parse(" beta:0 ", &f).unwrap(), Algorithm::beta(0.0));
        assert_eq!(
            parse("qklms", &f).unwrap(),
            Algorithm::Qklms { eta: StepSize::NoiseMatched, quant_radius: 1.0 }
        );
        assert!(parse("rls", &f).is_err());
        assert!(parse("beta:x", &f).is_err());
    }

    #[test]
    fn flags_fill_bare_tokens() {
        let f = Flags { eta: Some(0.3), beta: Some(0.25), budget: Some(10), quant_radius: Some(0.4), ..flags() };
        assert_eq!(parse("klms", &f).unwrap(), Algorithm::Klms { eta: StepSize::Fixed(0.3) });
        assert_eq!(parse("beta", &f).unwrap(), Algorithm::beta(0.25));
        assert_eq!(
            parse("qklms", &f).unwrap(),
            Algorithm::Qklms { eta: StepSize::Fixed(0.3), quant_radius: 0.4 }
        );
        assert!(matches!(parse("gp", &f).unwrap(), Algorithm::Gp { budget: Some(10), .. }));
    }

    #[test]
    fn grid_parsing() {
        assert_eq!(parse_grid("0:1:3").unwrap(), vec![0.0, 0.5, 1.0]);
        assert_eq!(parse_grid("2:2:1").unwrap(), vec![2.0]);
        assert!(parse_grid("1:0:3").is_err());
        assert!(parse_grid("0:1").is_err());
    }

    #[test]
    fn per_command_defaults() {
        let c = RunConfig::resolve(CommandKind::Reconverge, &flags()).unwrap();
        assert_eq!(c.seeds, 5);
        assert_eq!(c.switch_at, 500);
        assert_eq!(c.spec.noise_variance, 0.01);
        let u = RunConfig::resolve(CommandKind::Uncertainty, &flags()).unwrap();
        assert_eq!(u.prefixes, vec![3, 8, 25]);
        assert_eq!(u.data, DataSource::Sine { noise_std: 0.1 });
    }

    #[test]
    fn invalid_values_are_usage_errors() {
        let bad = [
            Flags { noise_var: Some(-1.0), ..flags() },
            Flags { seeds: Some(0), ..flags() },
            Flags { gen: Some("walk".into()), ..flags() },
            Flags { csv: Some("/no/such/file.csv".into()), dim: Some(2), ..flags() },
            Flags { algs: Some(",".into()), ..flags() },
            Flags { switch_input: Some("both".into()), ..flags() },
        ];
        for f in bad {
            let err = RunConfig::resolve(CommandKind::Compare, &f).unwrap_err();
            assert_eq!(err.exit_code(), 2, "{f:?}");
        }
    }

    #[test]
    fn missing_csv_message_names_the_path() {
        let f = Flags { csv: Some("/no/such/file.csv".into()), dim: Some(2), ..flags() };
        let err = RunConfig::resolve(CommandKind::Compare, &f).unwrap_err();
        assert!(err.to_string().contains("/no/such/file.csv"));
    }
}
