use std::io::{Read, Write};

use super::Snapshot;
use crate::error::{LabError, Result};

pub const TRAJECTORY_HEADER: [&str; 10] =
    ["t", "log_risk", "norm_theta", "gamma_tilde", "separated", "a_t", "b_t", "eta_t", "dir_gap", "nonsep_gap"];

fn opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:e}")).unwrap_or_default()
}

pub fn write_trajectory_csv<W: Write>(out: W, snapshots: &[Snapshot]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(TRAJECTORY_HEADER)?;
    for s in snapshots {
        w.write_record([
            s.t.to_string(),
            format!("{:e}", s.log_risk),
            format!("{:e}", s.norm_theta),
            opt(s.gamma_tilde),
            s.separated.to_string(),
            format!("{:e}", s.a_t),
            format!("{:e}", s.b_t),
            format!("{:e}", s.eta_t),
            opt(s.dir_gap),
            opt(s.nonsep_gap),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn field<T: std::str::FromStr>(rec: &csv::StringRecord, i: usize, line: usize) -> Result<T> {
    rec.get(i)
        .and_then(|s| s.trim().parse().ok())
        .ok_or_else(|| LabError::structural(format!("row {line}: bad value in column {}", TRAJECTORY_HEADER[i])))
}

fn opt_field(rec: &csv::StringRecord, i: usize, line: usize) -> Result<Option<f64>> {
    match rec.get(i).map(str::trim) {
        None | Some("") => Ok(None),
        Some(_) => field(rec, i, line).map(Some),
    }
}

/// Reads a trajectory CSV. `a_t`/`b_t` logs are recomputed from the stored values.
pub fn read_trajectory_csv<R: Read>(input: R) -> Result<Vec<Snapshot>> {
    let mut r = csv::Reader::from_reader(input);
    let header = r.headers()?.clone();
    if header.iter().ne(TRAJECTORY_HEADER) {
        return Err(LabError::structural("trajectory header does not match"));
    }
    let mut out = Vec::new();
    for (line, rec) in r.records().enumerate() {
        let rec = rec?;
        let a_t: f64 = field(&rec, 5, line)?;
        let b_t: f64 = field(&rec, 6, line)?;
        out.push(Snapshot {
            t: field(&rec, 0, line)?,
            log_risk: field(&rec, 1, line)?,
            norm_theta: field(&rec, 2, line)?,
            gamma_tilde: opt_field(&rec, 3, line)?,
            separated: field(&rec, 4, line)?,
            a_t,
            b_t,
            log_a_t: a_t.ln(),
            log_b_t: b_t.ln(),
            eta_t: field(&rec, 7, line)?,
            dir_gap: opt_field(&rec, 8, line)?,
            nonsep_gap: opt_field(&rec, 9, line)?,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_and_empty_optionals() {
        let s = Snapshot {
            t: 0,
            log_risk: 0.0,
            norm_theta: 0.0,
            gamma_tilde: None,
            separated: false,
            a_t: 0.1,
            b_t: 1.0,
            log_a_t: 0.1f64.ln(),
            log_b_t: 0.0,
            eta_t: 0.1,
            dir_gap: None,
            nonsep_gap: Some(0.5),
        };
        let mut buf = Vec::new();
        write_trajectory_csv(&mut buf, std::slice::from_ref(&s)).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("t,log_risk,norm_theta,gamma_tilde,separated,a_t,b_t,eta_t,dir_gap,nonsep_gap\n"));
        assert!(text.contains("0,0e0,0e0,,false,"));
        let back = read_trajectory_csv(&buf[..]).unwrap();
        assert_eq!(back[0].gamma_tilde, None);
        assert_eq!(back[0].nonsep_gap, Some(0.5));
        assert_eq!(back[0].a_t, 0.1);
    }
}
