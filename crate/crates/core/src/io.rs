//! Plain-text formats.
//!
//! * Matrices: a header line holding `n`, then `n` rows of `n`
//!   whitespace-separated entries. Adjacency files hold `0`/`1`, weight
//!   files hold 17 significant digits.
//! * Constraints: one `i j pos|zero` per line.
//! * Trajectories: CSV `t,node,state,observation` followed by
//!   `# excite node=<j> t=<t> e=<val>` comment lines.
//!
//! Blank lines and lines starting with `#` are ignored by the matrix and
//! constraint readers.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::dynamics::{ExcitationEvent, Trajectory};
use crate::error::{Error, Result};
use crate::estimate::EntryConstraint;
use crate::topology::WeightedDigraph;

fn parse_err(line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        message: message.into(),
    }
}

fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(k, l)| (k + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
}

pub fn format_matrix(w: &DMatrix<f64>) -> String {
    let mut out = format!("{}\n", w.nrows());
    for i in 0..w.nrows() {
        let row: Vec<String> = (0..w.ncols()).map(|j| format!("{:.16e}", w[(i, j)])).collect();
        out.push_str(&row.join(" "));
        out.push('\n');
    }
    out
}

pub fn parse_matrix(text: &str) -> Result<DMatrix<f64>> {
    let mut lines = content_lines(text);
    let (hline, header) = lines.next().ok_or_else(|| parse_err(1, "missing size header"))?;
    let n: usize = header
        .parse()
        .map_err(|_| parse_err(hline, format!("header `{header}` is not a node count")))?;
    let mut values = Vec::with_capacity(n * n);
    let mut rows = 0;
    for (line, l) in lines {
        if rows == n {
            return Err(parse_err(line, "more rows than the header declares"));
        }
        let row: Vec<f64> = l
            .split_whitespace()
            .map(|tok| {
                tok.parse::<f64>()
                    .map_err(|_| parse_err(line, format!("`{tok}` is not a number")))
            })
            .collect::<Result<_>>()?;
        if row.len() != n {
            return Err(parse_err(line, format!("expected {n} entries, found {}", row.len())));
        }
        values.extend(row);
        rows += 1;
    }
    if rows != n {
        return Err(parse_err(0, format!("expected {n} rows, found {rows}")));
    }
    Ok(DMatrix::from_row_slice(n, n, &values))
}

pub fn format_adjacency(g: &WeightedDigraph) -> String {
    let n = g.n();
    let mut out = format!("{n}\n");
    for i in 0..n {
        let row: Vec<&str> = (0..n).map(|j| if g.has_edge(i, j) { "1" } else { "0" }).collect();
        out.push_str(&row.join(" "));
        out.push('\n');
    }
    out
}

pub fn parse_adjacency(text: &str) -> Result<WeightedDigraph> {
    WeightedDigraph::from_adjacency(&parse_matrix(text)?)
}

pub fn format_constraints(constraints: &[(usize, usize, EntryConstraint)]) -> String {
    let mut out = String::new();
    for &(i, j, c) in constraints {
        let tag = match c {
            EntryConstraint::ForcedPositive => "pos",
            EntryConstraint::ForcedZero => "zero",
            EntryConstraint::Free => continue,
        };
        writeln!(out, "{i} {j} {tag}").expect("writing to a String");
    }
    out
}

pub fn parse_constraints(text: &str) -> Result<Vec<(usize, usize, EntryConstraint)>> {
    content_lines(text)
        .map(|(line, l)| {
            let toks: Vec<&str> = l.split_whitespace().collect();
            let [i, j, tag] = toks[..] else {
                return Err(parse_err(line, "expected `i j pos|zero`"));
            };
            let index = |s: &str| {
                s.parse::<usize>()
                    .map_err(|_| parse_err(line, format!("`{s}` is not a node index")))
            };
            let c = match tag {
                "pos" => EntryConstraint::ForcedPositive,
                "zero" => EntryConstraint::ForcedZero,
                other => return Err(parse_err(line, format!("unknown constraint `{other}`"))),
            };
            Ok((index(i)?, index(j)?, c))
        })
        .collect()
}

pub fn format_trajectory(traj: &Trajectory) -> String {
    let mut out = String::from("t,node,state,observation\n");
    for (t, (x, y)) in traj.states.iter().zip(&traj.observations).enumerate() {
        for i in 0..x.len() {
            writeln!(out, "{t},{i},{},{}", x[i], y[i]).expect("writing to a String");
        }
    }
    for ev in &traj.excitations {
        writeln!(out, "# excite node={} t={} e={}", ev.node, ev.time, ev.magnitude)
            .expect("writing to a String");
    }
    out
}

fn parse_excitation(line: usize, body: &str) -> Result<ExcitationEvent> {
    let mut node = None;
    let mut time = None;
    let mut magnitude = None;
    for tok in body.split_whitespace() {
        let (key, value) = tok
            .split_once('=')
            .ok_or_else(|| parse_err(line, format!("`{tok}` is not key=value")))?;
        let bad = || parse_err(line, format!("bad value in `{tok}`"));
        match key {
            "node" => node = Some(value.parse().map_err(|_| bad())?),
            "t" => time = Some(value.parse().map_err(|_| bad())?),
            "e" => magnitude = Some(value.parse().map_err(|_| bad())?),
            _ => return Err(parse_err(line, format!("unknown key `{key}`"))),
        }
    }
    match (node, time, magnitude) {
        (Some(node), Some(time), Some(magnitude)) => Ok(ExcitationEvent {
            node,
            time,
            magnitude,
        }),
        _ => Err(parse_err(line, "excite line needs node, t and e")),
    }
}

pub fn parse_trajectory(text: &str) -> Result<Trajectory> {
    let mut rows: Vec<(usize, usize, f64, f64)> = Vec::new();
    let mut excitations = Vec::new();
    let mut seen_header = false;
    for (k, raw) in text.lines().enumerate() {
        let line = k + 1;
        let l = raw.trim();
        if l.is_empty() {
            continue;
        }
        if let Some(rest) = l.strip_prefix('#') {
            if let Some(body) = rest.trim().strip_prefix("excite") {
                excitations.push(parse_excitation(line, body)?);
            }
            continue;
        }
        if !seen_header {
            if l.replace(' ', "") != "t,node,state,observation" {
                return Err(parse_err(line, "expected header `t,node,state,observation`"));
            }
            seen_header = true;
            continue;
        }
        let f: Vec<&str> = l.split(',').map(str::trim).collect();
        let [t, i, x, y] = f[..] else {
            return Err(parse_err(line, "expected 4 comma-separated fields"));
        };
        let bad = |s: &str| parse_err(line, format!("bad field `{s}`"));
        rows.push((
            t.parse().map_err(|_| bad(t))?,
            i.parse().map_err(|_| bad(i))?,
            x.parse().map_err(|_| bad(x))?,
            y.parse().map_err(|_| bad(y))?,
        ));
    }
    let steps = rows.iter().map(|r| r.0 + 1).max().unwrap_or(0);
    let n = rows.iter().map(|r| r.1 + 1).max().unwrap_or(0);
    if rows.len() != steps * n {
        return Err(parse_err(0, format!("{} rows do not fill {steps} steps x {n} nodes", rows.len())));
    }
    let mut states = vec![DVector::from_element(n, f64::NAN); steps];
    let mut observations = states.clone();
    for &(t, i, x, y) in &rows {
        states[t][i] = x;
        observations[t][i] = y;
    }
    if states.iter().any(|s| s.iter().any(|v| v.is_nan())) {
        return Err(parse_err(0, "duplicate or missing (t, node) rows"));
    }
    Trajectory::new(states, observations, excitations)
}

pub fn read_matrix(path: impl AsRef<Path>) -> Result<DMatrix<f64>> {
    parse_matrix(&fs::read_to_string(path)?)
}

pub fn read_adjacency(path: impl AsRef<Path>) -> Result<WeightedDigraph> {
    parse_adjacency(&fs::read_to_string(path)?)
}

pub fn read_constraints(path: impl AsRef<Path>) -> Result<Vec<(usize, usize, EntryConstraint)>> {
    parse_constraints(&fs::read_to_string(path)?)
}

pub fn read_trajectory(path: impl AsRef<Path>) -> Result<Trajectory> {
    parse_trajectory(&fs::read_to_string(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{simulate, ExcitationPlan, NoiseModel};
    use crate::topology::{generate_random_digraph, weight_metropolis};

    #[test]
    fn weights_round_trip_exactly() {
        let g = generate_random_digraph(7, 0.4, 2).unwrap();
        let w = weight_metropolis(&g).unwrap();
        let text = format_matrix(w.weights());
        assert_eq!(&parse_matrix(&text).unwrap(), w.weights());
        assert_eq!(parse_adjacency(&format_adjacency(&g)).unwrap(), g);
    }

    #[test]
    fn matrix_errors_carry_line_numbers() {
        match parse_matrix("2\n1 2\n3 x\n") {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
        assert!(parse_matrix("2\n1 2\n").is_err());
        assert!(parse_matrix("2\n1 2 3\n4 5 6\n").is_err());
        assert!(parse_adjacency("2\n0 2\n0 0\n").is_err());
        assert!(parse_adjacency("2\n1 0\n0 0\n").is_err());
    }

    #[test]
    fn constraints_round_trip() {
        let c = vec![
            (0, 2, EntryConstraint::ForcedPositive),
            (1, 2, EntryConstraint::ForcedZero),
        ];
        let text = format_constraints(&c);
        assert_eq!(text, "0 2 pos\n1 2 zero\n");
        assert_eq!(parse_constraints(&format!("# c\n\n{text}")).unwrap(), c);
        assert!(parse_constraints("0 1 maybe\n").is_err());
        assert!(parse_constraints("0 1\n").is_err());
    }

    #[test]
    fn trajectory_round_trip() {
        let g = generate_random_digraph(5, 0.4, 3).unwrap();
        let w = weight_metropolis(&g).unwrap();
        let plan = ExcitationPlan::single(2, 3, -4.25).unwrap();
        let traj = simulate(
            &w,
            &DVector::from_element(5, 0.5),
            6,
            &NoiseModel::new(1.0, 1.0).unwrap(),
            Some(&plan),
            4,
        )
        .unwrap();
        let text = format_trajectory(&traj);
        assert!(text.starts_with("t,node,state,observation\n"));
        assert!(text.contains("# excite node=2 t=3 e=-4.25"));
        assert_eq!(parse_trajectory(&text).unwrap(), traj);
        assert!(parse_trajectory("t,node,state,observation\n0,0,1,1\n0,0,1,1\n").is_err());
    }
}
