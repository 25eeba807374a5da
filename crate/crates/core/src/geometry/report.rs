use std::io::Write;

use super::{MarginCertificate, SeparabilitySplit};
use crate::error::Result;

fn join_f64(v: &[f64]) -> String {
    v.iter().map(|x| format!("{x:.16e}")).collect::<Vec<_>>().join(" ")
}

fn join_usize(v: &[usize]) -> String {
    v.iter().map(usize::to_string).collect::<Vec<_>>().join(" ")
}

pub fn write_certificate<W: Write>(out: &mut W, cert: &MarginCertificate) -> Result<()> {
    writeln!(out, "[certificate]")?;
    writeln!(out, "separable = {}", cert.separable())?;
    writeln!(out, "gamma_star = {:.16e}", cert.gamma_star)?;
    writeln!(out, "duality_gap = {:.16e}", cert.duality_gap)?;
    writeln!(out, "iterations = {}", cert.iterations)?;
    writeln!(out, "converged = {}", cert.converged)?;
    match &cert.theta_star {
        Some(t) => writeln!(out, "theta_star = {}", join_f64(t))?,
        None => writeln!(out, "theta_star =")?,
    }
    writeln!(out, "p_star = {}", join_f64(&cert.p_star))?;
    writeln!(out)?;
    Ok(())
}

pub fn write_split<W: Write>(out: &mut W, split: &SeparabilitySplit) -> Result<()> {
    writeln!(out, "[separability]")?;
    writeln!(out, "sep_indices = {}", join_usize(&split.sep_indices))?;
    writeln!(out, "nonsep_indices = {}", join_usize(&split.nonsep_indices))?;
    writeln!(out, "witness_theta = {}", join_f64(&split.witness_theta))?;
    match split.gamma_sep {
        Some(g) => writeln!(out, "gamma_sep = {g:.16e}")?,
        None => writeln!(out, "gamma_sep =")?,
    }
    writeln!(out, "near_threshold = {}", join_usize(&split.near_threshold))?;
    writeln!(out)?;
    Ok(())
}
