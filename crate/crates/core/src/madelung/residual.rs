use super::{wrap_angle, HydroFields};
use crate::error::{Error, Result};
use crate::grid::{fd, GridSpec};
use crate::wavefield::PotentialSpec;

/// Points whose every neighbour within `reach` cells along each axis is masked.
pub fn interior_mask(grid: &GridSpec, mask: &[bool], reach: isize) -> Vec<bool> {
    (0..grid.len())
        .map(|i| {
            mask[i]
                && (0..grid.dim()).all(|a| (-reach..=reach).all(|o| mask[grid.neighbor(i, a, o)]))
        })
        .collect()
}

pub fn l2_norm(field: &[f64], grid: &GridSpec) -> f64 {
    (field.iter().map(|r| r * r).sum::<f64>() * grid.cell_volume()).sqrt()
}

pub fn l2_norm_vec(field: &[[f64; 2]], grid: &GridSpec) -> f64 {
    (field.iter().map(|r| r[0] * r[0] + r[1] * r[1]).sum::<f64>() * grid.cell_volume()).sqrt()
}

pub fn linf_norm(field: &[f64]) -> f64 {
    field.iter().fold(0.0, |m, r| m.max(r.abs()))
}

pub fn linf_norm_vec(field: &[[f64; 2]]) -> f64 {
    field.iter().fold(0.0, |m, r| m.max(r[0].hypot(r[1])))
}

/// Central time-difference weights for 2, 3 or 5 equally spaced snapshots:
/// derivative weights (already divided by dt) and the weights that place
/// spatial terms at the same instant.
fn time_stencil(snaps: &[HydroFields]) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = snaps.len();
    if !matches!(n, 2 | 3 | 5) {
        return Err(Error::InvalidInput(format!("need 2, 3 or 5 snapshots, got {n}")));
    }
    for s in &snaps[1..] {
        snaps[0].grid.check_same(&s.grid)?;
    }
    let dt = snaps[1].time - snaps[0].time;
    if !(dt > 0.0) {
        return Err(Error::InvalidInput("snapshot times must increase".into()));
    }
    for k in 1..n {
        let d = snaps[k].time - snaps[k - 1].time;
        if (d - dt).abs() > 1e-9 * dt.max(1.0) {
            return Err(Error::InvalidInput("snapshots must be equally spaced in time".into()));
        }
    }
    Ok(match n {
        2 => (vec![-1.0 / dt, 1.0 / dt], vec![0.5, 0.5]),
        3 => (vec![-0.5 / dt, 0.0, 0.5 / dt], vec![0.0, 1.0, 0.0]),
        _ => (
            vec![1.0 / (12.0 * dt), -8.0 / (12.0 * dt), 0.0, 8.0 / (12.0 * dt), -1.0 / (12.0 * dt)],
            vec![0.0, 0.0, 1.0, 0.0, 0.0],
        ),
    })
}

fn common_mask(snaps: &[HydroFields]) -> Vec<bool> {
    let mut m = snaps[0].mask.clone();
    for s in &snaps[1..] {
        for (a, b) in m.iter_mut().zip(&s.mask) {
            *a &= *b;
        }
    }
    m
}

fn divergence(v: &[[f64; 2]], grid: &GridSpec) -> Vec<f64> {
    let mut out = vec![0.0; grid.len()];
    for a in 0..grid.dim() {
        let c: Vec<f64> = v.iter().map(|x| x[a]).collect();
        for (o, d) in out.iter_mut().zip(fd::d1(&c, grid, a)) {
            *o += d;
        }
    }
    out
}

/// `d rho/dt + div(rho nu)` at the stencil's centre time.
pub fn continuity_residual(snaps: &[HydroFields]) -> Result<Vec<f64>> {
    let (dw, vw) = time_stencil(snaps)?;
    let g = &snaps[0].grid;
    let mut r = vec![0.0; g.len()];
    for (k, s) in snaps.iter().enumerate() {
        if dw[k] != 0.0 {
            for (ri, rho) in r.iter_mut().zip(&s.rho) {
                *ri += dw[k] * rho;
            }
        }
        if vw[k] != 0.0 {
            for (ri, d) in r.iter_mut().zip(divergence(&s.current(), g)) {
                *ri += vw[k] * d;
            }
        }
    }
    Ok(r)
}

/// Spatial part of the momentum residual for one snapshot:
/// `m_j rho (nu . grad) nu_j - rho F_j - sum_i (hbar^2/4m_i) d_i(d_i d_j rho - d_i rho d_j rho / rho)`
/// plus the spin stress and spin-gradient magnetic force when a spin field is present.
fn navier_spatial(f: &HydroFields, force: &[[f64; 2]], pot: &PotentialSpec) -> Vec<[f64; 2]> {
    let g = &f.grid;
    let n = g.len();
    let dim = g.dim();
    let h2 = f.hbar * f.hbar;
    let drho: Vec<Vec<f64>> = (0..dim).map(|a| fd::d1(&f.rho, g, a)).collect();
    let nu: Vec<Vec<f64>> = (0..dim).map(|a| f.nu.iter().map(|v| v[a]).collect()).collect();
    let mut out = vec![[0.0; 2]; n];
    for j in 0..dim {
        let mut acc = vec![0.0; n];
        for i in 0..dim {
            let dnu = fd::d1(&nu[j], g, i);
            for p in 0..n {
                acc[p] += f.masses[j] * f.rho[p] * f.nu[p][i] * dnu[p];
            }
            // stress divergence
            let dij = fd::d1(&drho[j], g, i);
            let t: Vec<f64> = (0..n)
                .map(|p| if f.mask[p] { dij[p] - drho[i][p] * drho[j][p] / f.rho[p] } else { 0.0 })
                .collect();
            let c = h2 / (4.0 * f.masses[i]);
            for (a, d) in acc.iter_mut().zip(fd::d1(&t, g, i)) {
                *a -= c * d;
            }
        }
        for p in 0..n {
            out[p][j] = acc[p] - f.rho[p] * force[p][j];
        }
    }
    if let Some(sp) = &f.spin {
        let ds: Vec<Vec<[f64; 3]>> = (0..dim)
            .map(|a| {
                let comps: Vec<Vec<f64>> = (0..3)
                    .map(|c| fd::d1(&sp.s.iter().map(|v| v[c]).collect::<Vec<_>>(), g, a))
                    .collect();
                (0..n).map(|p| [comps[0][p], comps[1][p], comps[2][p]]).collect()
            })
            .collect();
        let dot = |a: [f64; 3], b: [f64; 3]| a[0] * b[0] + a[1] * b[1] + a[2] * b[2];
        for j in 0..dim {
            for i in 0..dim {
                let t: Vec<f64> = (0..n).map(|p| f.rho[p] * dot(ds[i][p], ds[j][p])).collect();
                let c = h2 / (4.0 * f.masses[i]);
                for (p, d) in fd::d1(&t, g, i).into_iter().enumerate() {
                    out[p][j] += c * d;
                }
            }
        }
        if let Some(b) = &pot.magnetic {
            let k = h2 * sp.moment / 4.0;
            for j in 0..dim {
                let db: Vec<Vec<f64>> = (0..3).map(|c| fd::d1(&b.iter().map(|v| v[c]).collect::<Vec<_>>(), g, j)).collect();
                for p in 0..n {
                    out[p][j] -= k * f.rho[p] * (sp.s[p][0] * db[0][p] + sp.s[p][1] * db[1][p] + sp.s[p][2] * db[2][p]);
                }
            }
        }
    }
    out
}

/// Quantum Navier residual, zero outside the stencil interior of the mask.
pub fn navier_residual(snaps: &[HydroFields], pot: &PotentialSpec) -> Result<Vec<[f64; 2]>> {
    let (dw, vw) = time_stencil(snaps)?;
    let g = &snaps[0].grid;
    let n = g.len();
    let dim = g.dim();
    let interior = interior_mask(g, &common_mask(snaps), 4);
    if !interior.iter().any(|m| *m) {
        return Err(Error::MaskTooSmall);
    }
    let force = pot.force(g);
    let centre = vw.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).map(|(k, _)| k).unwrap_or(0);
    let mut r = vec![[0.0; 2]; n];
    for (k, s) in snaps.iter().enumerate() {
        if dw[k] != 0.0 {
            // m rho d_t nu, with rho placed at the centre time
            for p in 0..n {
                for a in 0..dim {
                    r[p][a] += dw[k] * s.nu[p][a];
                }
            }
        }
    }
    // multiply the time derivative by m rho(centre)
    let rho_c: Vec<f64> = if snaps.len() == 2 {
        snaps[0].rho.iter().zip(&snaps[1].rho).map(|(a, b)| 0.5 * (a + b)).collect()
    } else {
        snaps[centre].rho.clone()
    };
    for p in 0..n {
        for a in 0..dim {
            r[p][a] *= snaps[0].masses[a] * rho_c[p];
        }
    }
    for (k, s) in snaps.iter().enumerate() {
        if vw[k] != 0.0 {
            for (rp, sp) in r.iter_mut().zip(navier_spatial(s, &force, pot)) {
                rp[0] += vw[k] * sp[0];
                rp[1] += vw[k] * sp[1];
            }
        }
    }
    for p in 0..n {
        if !interior[p] {
            r[p] = [0.0; 2];
        }
    }
    Ok(r)
}

/// Quantum Hamilton-Jacobi residual
/// `d_t phi + sum_a m_a nu_a^2 / 2 + V - sum_a (hbar^2/2m_a) d_a^2 sqrt(rho) / sqrt(rho)`,
/// zero outside the stencil interior of the mask.
pub fn quantum_hj_residual(snaps: &[HydroFields], pot: &PotentialSpec) -> Result<Vec<f64>> {
    if pot.extra_force.is_some() {
        return Err(Error::NonConservative);
    }
    if let Some(v) = &pot.vector {
        if v.iter().any(|a| a != &v[0]) {
            return Err(Error::NonConservative);
        }
    }
    if snaps.iter().any(|s| s.spin.is_some()) {
        return Err(Error::Unsupported("the scalar Hamilton-Jacobi residual does not cover spinor fields".into()));
    }
    let (dw, vw) = time_stencil(snaps)?;
    let g = &snaps[0].grid;
    let n = g.len();
    let dim = g.dim();
    let interior = interior_mask(g, &common_mask(snaps), 2);
    if !interior.iter().any(|m| *m) {
        return Err(Error::MaskTooSmall);
    }
    let reference = snaps
        .iter()
        .position(|s| s.phase.is_none())
        .map_or(Ok(()), |_| Err(Error::InvalidInput("phase unavailable for these fields".into())));
    reference?;
    let base = snaps[0].phase.as_ref().unwrap();
    let mut r = vec![0.0; n];
    for (k, s) in snaps.iter().enumerate() {
        if dw[k] != 0.0 {
            let ph = s.phase.as_ref().unwrap();
            let hbar = s.hbar;
            for p in 0..n {
                // differences relative to the first snapshot, wrapped to one branch
                r[p] += dw[k] * hbar * wrap_angle((ph[p] - base[p]) / hbar);
            }
        }
    }
    for (k, s) in snaps.iter().enumerate() {
        if vw[k] == 0.0 {
            continue;
        }
        let amp: Vec<f64> = s.rho.iter().map(|r| r.sqrt()).collect();
        let lap: Vec<Vec<f64>> = (0..dim).map(|a| fd::d2(&amp, g, a)).collect();
        for p in 0..n {
            if !interior[p] {
                continue;
            }
            let mut e = pot.scalar_at(p);
            for a in 0..dim {
                e += 0.5 * s.masses[a] * s.nu[p][a] * s.nu[p][a];
                e -= s.hbar * s.hbar / (2.0 * s.masses[a]) * lap[a][p] / amp[p];
            }
            r[p] += vw[k] * e;
        }
    }
    for p in 0..n {
        if !interior[p] {
            r[p] = 0.0;
        }
    }
    Ok(r)
}
