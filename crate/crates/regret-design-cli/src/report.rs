//! Report formatting: 17-significant-digit CSV (round-trip exact for
//! f64), atomic file writes, and the solution round-trip parser.

use std::io::Write;
use std::path::Path;

use regret_design::model::{design_bits, DesignProblem};
use regret_design::regret::{Binding, RegretBreakdown};
use regret_design::solver::DesignSolution;

/// Fixed-format float: scientific, '.' decimal, 17 significant digits.
pub fn fmt_f64(v: f64) -> String {
    if v.is_infinite() {
        return if v > 0.0 { "inf".into() } else { "-inf".into() };
    }
    format!("{v:.16e}")
}

pub fn parse_f64(text: &str) -> Result<f64, String> {
    match text {
        "inf" => Ok(f64::INFINITY),
        "-inf" => Ok(f64::NEG_INFINITY),
        other => other
            .parse()
            .map_err(|e| format!("bad float {other:?}: {e}")),
    }
}

fn binding_str(b: Binding) -> &'static str {
    match b {
        Binding::Variance => "variance",
        Binding::Bias => "bias",
        Binding::Both => "both",
    }
}

fn parse_binding(text: &str) -> Result<Binding, String> {
    match text {
        "variance" => Ok(Binding::Variance),
        "bias" => Ok(Binding::Bias),
        "both" => Ok(Binding::Both),
        other => Err(format!("bad binding {other:?}")),
    }
}

/// Writes bytes atomically: temp file in the target directory, then
/// rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty());
    let mut tmp = match dir {
        Some(d) => tempfile::NamedTempFile::new_in(d)?,
        None => tempfile::NamedTempFile::new_in(".")?,
    };
    tmp.write_all(bytes)?;
    tmp.flush()?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}

/// Solution CSV: one `arm` record per arm (name, selected flag, shrinkage
/// weight, sample size), then one `summary` record with the regret
/// breakdown.
pub fn solution_csv(problem: &DesignProblem, sol: &DesignSolution) -> String {
    let mut out = String::new();
    out.push_str("record,name,selected,gamma,n,alpha,alpha_star,beta,beta_star,regret,binding\n");
    for (j, arm) in problem.arms().iter().enumerate() {
        out.push_str(&format!(
            "arm,{},{},{},{},,,,,,\n",
            arm.name,
            u8::from(sol.x_star[j]),
            fmt_f64(sol.gamma_star[j]),
            fmt_f64(sol.n_star[j]),
        ));
    }
    let b = &sol.breakdown;
    out.push_str(&format!(
        "summary,,,,,{},{},{},{},{},{}\n",
        fmt_f64(b.alpha),
        fmt_f64(b.alpha_star),
        fmt_f64(b.beta),
        fmt_f64(b.beta_star),
        fmt_f64(b.regret),
        binding_str(b.binding),
    ));
    out
}

/// Parses the output of [`solution_csv`] back into a solution.
pub fn parse_solution_csv(text: &str) -> Result<DesignSolution, String> {
    let mut lines = text.lines();
    let header = lines.next().ok_or("empty solution csv")?;
    if !header.starts_with("record,") {
        return Err(format!("unexpected header {header:?}"));
    }
    let mut x_star = Vec::new();
    let mut gamma_star = Vec::new();
    let mut n_star = Vec::new();
    let mut breakdown = None;
    for line in lines {
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 11 {
            return Err(format!("bad field count in {line:?}"));
        }
        match fields[0] {
            "arm" => {
                x_star.push(fields[2] == "1");
                gamma_star.push(parse_f64(fields[3])?);
                n_star.push(parse_f64(fields[4])?);
            }
            "summary" => {
                breakdown = Some(RegretBreakdown {
                    alpha: parse_f64(fields[5])?,
                    alpha_star: parse_f64(fields[6])?,
                    beta: parse_f64(fields[7])?,
                    beta_star: parse_f64(fields[8])?,
                    regret: parse_f64(fields[9])?,
                    binding: parse_binding(fields[10])?,
                });
            }
            other => return Err(format!("unknown record kind {other:?}")),
        }
    }
    let breakdown = breakdown.ok_or("missing summary record")?;
    Ok(DesignSolution {
        x_star,
        gamma_star,
        n_star,
        t_star: breakdown.regret,
        breakdown,
    })
}

/// Human-readable design report.
pub fn solution_text(problem: &DesignProblem, sol: &DesignSolution, title: &str) -> String {
    let mut out = String::new();
    let selected = sol.selected_names(problem);
    out.push_str(&format!("{title}\n"));
    out.push_str(&format!(
        "  selected arms : {} ({})\n",
        if selected.is_empty() {
            "none (observational only)".to_string()
        } else {
            selected.join(", ")
        },
        design_bits(&sol.x_star),
    ));
    for (j, arm) in problem.arms().iter().enumerate() {
        if sol.x_star[j] {
            out.push_str(&format!(
                "    {:<12} n = {:>12.3}  gamma = {:.4}\n",
                arm.name, sol.n_star[j], sol.gamma_star[j]
            ));
        }
    }
    let b = &sol.breakdown;
    out.push_str(&format!(
        "  regret factor : {:.6} (binding: {})\n",
        sol.t_star,
        binding_str(b.binding)
    ));
    out.push_str(&format!(
        "  variance      : {} (oracle {}, ratio {:.4})\n",
        fmt_f64(b.alpha),
        fmt_f64(b.alpha_star),
        b.variance_ratio()
    ));
    out.push_str(&format!(
        "  bias index    : {} (oracle {}, ratio {:.4})\n",
        fmt_f64(b.beta),
        fmt_f64(b.beta_star),
        b.bias_ratio()
    ));
    out
}
