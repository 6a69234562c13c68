//! Plain-text network file.
//!
//! ```text
//! # comment
//! [buses]
//! count = 3
//! slack = 1            # 1-based, optional (defaults to 1)
//!
//! [generators]
//! # bus  alpha  beta  gamma  capacity
//! 1  0.02  150  0  600
//!
//! [lines]
//! # from  to  reactance  capacity      ("-" for no reactance)
//! 1  2  0.1  1000
//!
//! [ptdf]               # optional; one row per line, one column per bus
//! 1.0  0.0  0.0
//! ```
//!
//! Fields may be separated by whitespace or commas. Bus indices in the file
//! are 1-based. When both reactances and a `[ptdf]` block are present the
//! supplied matrix is used and a warning is returned.

use std::fmt::Write as _;

use super::{compute_ptdf, GeneratorCost, Line, Network, Ptdf};
use crate::error::{Error, Result};

#[derive(Clone, Debug)]
pub struct NetworkFile {
    pub network: Network,
    pub warnings: Vec<String>,
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Section {
    None,
    Buses,
    Generators,
    Lines,
    Ptdf,
}

fn fields(line: &str) -> Vec<&str> {
    line.split(|c: char| c.is_whitespace() || c == ',')
        .filter(|s| !s.is_empty())
        .collect()
}

pub fn parse_network(text: &str, origin: &str) -> Result<NetworkFile> {
    let err = |line: usize, message: String| Error::Parse {
        path: origin.to_string(),
        line,
        message,
    };
    let num = |line: usize, tok: &str, what: &str| -> Result<f64> {
        tok.parse::<f64>()
            .map_err(|_| err(line, format!("cannot parse {what} from {tok:?}")))
    };
    let bus = |line: usize, tok: &str| -> Result<usize> {
        match tok.parse::<usize>() {
            Ok(b) if b >= 1 => Ok(b - 1),
            _ => Err(err(line, format!("bad bus index {tok:?} (1-based)"))),
        }
    };

    let mut section = Section::None;
    let mut count: Option<usize> = None;
    let mut slack = 0usize;
    let mut generators: Vec<(usize, usize, GeneratorCost)> = Vec::new();
    let mut lines: Vec<Line> = Vec::new();
    let mut ptdf_rows: Vec<(usize, Vec<f64>)> = Vec::new();
    let mut saw_ptdf = false;

    for (idx, raw) in text.lines().enumerate() {
        let lineno = idx + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        if content.starts_with('[') {
            section = match content {
                "[buses]" => Section::Buses,
                "[generators]" => Section::Generators,
                "[lines]" => Section::Lines,
                "[ptdf]" => {
                    saw_ptdf = true;
                    Section::Ptdf
                }
                other => return Err(err(lineno, format!("unknown section {other}"))),
            };
            continue;
        }
        match section {
            Section::None => return Err(err(lineno, "data outside of any section".into())),
            Section::Buses => {
                let (key, value) = content
                    .split_once('=')
                    .ok_or_else(|| err(lineno, "expected key = value".into()))?;
                let value = value.trim();
                match key.trim() {
                    "count" => {
                        count = Some(value.parse().map_err(|_| {
                            err(lineno, format!("bad bus count {value:?}"))
                        })?)
                    }
                    "slack" => slack = bus(lineno, value)?,
                    other => return Err(err(lineno, format!("unknown bus key {other:?}"))),
                }
            }
            Section::Generators => {
                let f = fields(content);
                if f.len() != 5 {
                    return Err(err(
                        lineno,
                        format!("generator row needs 5 fields (bus alpha beta gamma capacity), got {}", f.len()),
                    ));
                }
                let b = bus(lineno, f[0])?;
                generators.push((
                    lineno,
                    b,
                    GeneratorCost {
                        alpha: num(lineno, f[1], "alpha")?,
                        beta: num(lineno, f[2], "beta")?,
                        gamma: num(lineno, f[3], "gamma")?,
                        capacity: num(lineno, f[4], "capacity")?,
                    },
                ));
            }
            Section::Lines => {
                let f = fields(content);
                if f.len() != 4 {
                    return Err(err(
                        lineno,
                        format!("line row needs 4 fields (from to reactance capacity), got {}", f.len()),
                    ));
                }
                let reactance = if f[2] == "-" {
                    None
                } else {
                    Some(num(lineno, f[2], "reactance")?)
                };
                lines.push(Line {
                    from_bus: bus(lineno, f[0])?,
                    to_bus: bus(lineno, f[1])?,
                    reactance,
                    capacity: num(lineno, f[3], "capacity")?,
                });
            }
            Section::Ptdf => {
                let row_index = ptdf_rows.len() + 1;
                let row = fields(content)
                    .into_iter()
                    .map(|t| {
                        t.parse::<f64>().map_err(|_| {
                            err(lineno, format!("PTDF row {row_index}: cannot parse {t:?}"))
                        })
                    })
                    .collect::<Result<Vec<_>>>()?;
                ptdf_rows.push((lineno, row));
            }
        }
    }

    let n = count.ok_or_else(|| err(0, "missing [buses] count".into()))?;
    if n == 0 {
        return Err(err(0, "bus count must be positive".into()));
    }
    if slack >= n {
        return Err(err(0, format!("slack bus {} exceeds bus count {n}", slack + 1)));
    }

    let mut by_bus: Vec<Option<GeneratorCost>> = vec![None; n];
    for (lineno, b, g) in generators {
        if b >= n {
            return Err(err(lineno, format!("generator bus {} exceeds bus count {n}", b + 1)));
        }
        if by_bus[b].is_some() {
            return Err(err(
                lineno,
                format!("bus {} already has a generator (one per bus)", b + 1),
            ));
        }
        by_bus[b] = Some(g);
    }
    let generators = by_bus
        .into_iter()
        .enumerate()
        .map(|(b, g)| g.ok_or_else(|| err(0, format!("bus {} has no generator", b + 1))))
        .collect::<Result<Vec<_>>>()?;

    let mut warnings = Vec::new();
    let all_reactances = !lines.is_empty() && lines.iter().all(|l| l.reactance.is_some());
    let ptdf = if saw_ptdf {
        for (i, (lineno, row)) in ptdf_rows.iter().enumerate() {
            if row.len() != n {
                return Err(err(
                    *lineno,
                    format!("PTDF row {} has {} entries, expected {n}", i + 1, row.len()),
                ));
            }
        }
        if ptdf_rows.len() != lines.len() {
            return Err(err(
                0,
                format!("PTDF has {} rows, expected one per line ({})", ptdf_rows.len(), lines.len()),
            ));
        }
        if all_reactances {
            warnings.push(
                "both reactances and a PTDF matrix were supplied; using the supplied PTDF".into(),
            );
        }
        Ptdf::from_rows(ptdf_rows.into_iter().map(|(_, r)| r).collect(), n)?
    } else if lines.is_empty() {
        Ptdf::zeros(0, n)
    } else {
        compute_ptdf(&lines, n, slack)?
    };

    Ok(NetworkFile {
        network: Network {
            n_buses: n,
            lines,
            generators,
            ptdf,
            slack_bus: slack,
        },
        warnings,
    })
}

/// Writes a network in the format accepted by [`parse_network`]. The PTDF
/// block is emitted only when `include_ptdf` is set.
pub fn format_network(network: &Network, include_ptdf: bool) -> String {
    let mut out = String::new();
    writeln!(out, "[buses]").unwrap();
    writeln!(out, "count = {}", network.n_buses).unwrap();
    writeln!(out, "slack = {}", network.slack_bus + 1).unwrap();
    writeln!(out).unwrap();
    writeln!(out, "[generators]").unwrap();
    writeln!(out, "# bus alpha beta gamma capacity").unwrap();
    for (b, g) in network.generators.iter().enumerate() {
        writeln!(out, "{} {:?} {:?} {:?} {:?}", b + 1, g.alpha, g.beta, g.gamma, g.capacity).unwrap();
    }
    writeln!(out).unwrap();
    writeln!(out, "[lines]").unwrap();
    writeln!(out, "# from to reactance capacity").unwrap();
    for l in &network.lines {
        let x = l.reactance.map_or("-".to_string(), |x| format!("{x:?}"));
        writeln!(out, "{} {} {} {:?}", l.from_bus + 1, l.to_bus + 1, x, l.capacity).unwrap();
    }
    if include_ptdf {
        writeln!(out).unwrap();
        writeln!(out, "[ptdf]").unwrap();
        for l in 0..network.ptdf.rows() {
            let row: Vec<String> = network.ptdf.row(l).iter().map(|v| format!("{v:?}")).collect();
            writeln!(out, "{}", row.join(" ")).unwrap();
        }
    }
    out
}
