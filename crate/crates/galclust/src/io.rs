//! Artifact I/O: a self-describing little-endian binary array format (for
//! eigenbases and covariance matrices), text tables for correlation
//! functions and likelihood surfaces, and small static SVG plots.
//!
//! Text floats are written with the shortest-roundtrip formatter, so
//! rereading reproduces the bits; none of the writers emit timestamps.

use std::io::{Read, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::angcorr::WTheta;
use crate::error::{Error, Result};
use crate::klpipe::{KlBasis, LikelihoodSurface};

const ARRAY_MAGIC: &[u8; 6] = b"GCARR1";
const BASIS_MAGIC: &[u8; 6] = b"GCKLB1";
const DTYPE_F64: u8 = 1;
const ENDIAN_LITTLE: u8 = 1;

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |e| Error::io(path, e)
}

fn write_header(w: &mut impl Write, magic: &[u8; 6], dims: &[u64]) -> std::io::Result<()> {
    w.write_all(magic)?;
    w.write_all(&[DTYPE_F64, ENDIAN_LITTLE])?;
    w.write_all(&(dims.len() as u32).to_le_bytes())?;
    for d in dims {
        w.write_all(&d.to_le_bytes())?;
    }
    Ok(())
}

fn read_header(r: &mut impl Read, magic: &[u8; 6], path: &Path) -> Result<Vec<u64>> {
    let mut m = [0u8; 6];
    r.read_exact(&mut m).map_err(io_err(path))?;
    if &m != magic {
        return Err(Error::Parse {
            path: path.into(),
            line: 0,
            message: format!("bad magic: expected {magic:?}"),
        });
    }
    let mut tags = [0u8; 2];
    r.read_exact(&mut tags).map_err(io_err(path))?;
    if tags != [DTYPE_F64, ENDIAN_LITTLE] {
        return Err(Error::Parse {
            path: path.into(),
            line: 0,
            message: "unsupported dtype or endianness".into(),
        });
    }
    let mut nd = [0u8; 4];
    r.read_exact(&mut nd).map_err(io_err(path))?;
    let ndim = u32::from_le_bytes(nd) as usize;
    if ndim > 8 {
        return Err(Error::Parse { path: path.into(), line: 0, message: "too many dims".into() });
    }
    let mut dims = Vec::with_capacity(ndim);
    for _ in 0..ndim {
        let mut b = [0u8; 8];
        r.read_exact(&mut b).map_err(io_err(path))?;
        dims.push(u64::from_le_bytes(b));
    }
    Ok(dims)
}

fn write_f64s(w: &mut impl Write, values: impl Iterator<Item = f64>) -> std::io::Result<()> {
    for v in values {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

fn read_f64s(r: &mut impl Read, n: usize, path: &Path) -> Result<Vec<f64>> {
    let mut bytes = vec![0u8; n * 8];
    r.read_exact(&mut bytes).map_err(io_err(path))?;
    Ok(bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect())
}

/// Row-major matrix in the binary array format.
pub fn write_matrix(path: &Path, m: &DMatrix<f64>) -> Result<()> {
    let f = std::fs::File::create(path).map_err(io_err(path))?;
    let mut w = std::io::BufWriter::new(f);
    write_header(&mut w, ARRAY_MAGIC, &[m.nrows() as u64, m.ncols() as u64])
        .map_err(io_err(path))?;
    for i in 0..m.nrows() {
        write_f64s(&mut w, (0..m.ncols()).map(|j| m[(i, j)])).map_err(io_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

pub fn read_matrix(path: &Path) -> Result<DMatrix<f64>> {
    let f = std::fs::File::open(path).map_err(io_err(path))?;
    let mut r = std::io::BufReader::new(f);
    let dims = read_header(&mut r, ARRAY_MAGIC, path)?;
    if dims.len() != 2 {
        return Err(Error::Parse { path: path.into(), line: 0, message: "expected 2D array".into() });
    }
    let (nr, nc) = (dims[0] as usize, dims[1] as usize);
    let data = read_f64s(&mut r, nr * nc, path)?;
    Ok(DMatrix::from_row_iterator(nr, nc, data))
}

/// Persist an eigenbasis: eigenvalues, eigenvectors and the kept mode set.
pub fn write_basis(path: &Path, basis: &KlBasis) -> Result<()> {
    let n = basis.dim() as u64;
    let f = std::fs::File::create(path).map_err(io_err(path))?;
    let mut w = std::io::BufWriter::new(f);
    write_header(&mut w, BASIS_MAGIC, &[n, n, basis.kept.len() as u64]).map_err(io_err(path))?;
    write_f64s(&mut w, basis.eigenvalues.iter().cloned()).map_err(io_err(path))?;
    for i in 0..basis.dim() {
        write_f64s(&mut w, (0..basis.dim()).map(|j| basis.vectors[(i, j)]))
            .map_err(io_err(path))?;
    }
    for &k in &basis.kept {
        w.write_all(&(k as u64).to_le_bytes()).map_err(io_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

pub fn read_basis(path: &Path) -> Result<KlBasis> {
    let f = std::fs::File::open(path).map_err(io_err(path))?;
    let mut r = std::io::BufReader::new(f);
    let dims = read_header(&mut r, BASIS_MAGIC, path)?;
    if dims.len() != 3 || dims[0] != dims[1] {
        return Err(Error::Parse { path: path.into(), line: 0, message: "bad basis header".into() });
    }
    let n = dims[0] as usize;
    let kept_n = dims[2] as usize;
    let eigenvalues = DVector::from_vec(read_f64s(&mut r, n, path)?);
    let vectors = DMatrix::from_row_iterator(n, n, read_f64s(&mut r, n * n, path)?);
    let mut kept = Vec::with_capacity(kept_n);
    for _ in 0..kept_n {
        let mut b = [0u8; 8];
        r.read_exact(&mut b).map_err(io_err(path))?;
        kept.push(u64::from_le_bytes(b) as usize);
    }
    Ok(KlBasis { eigenvalues, vectors, kept })
}

fn fmt(v: f64) -> String {
    if v.is_nan() {
        "nan".into()
    } else {
        v.to_string()
    }
}

/// w(theta) table: bin edges in a comment, then
/// `theta_arcmin,w,err,npairs` rows.
pub fn write_wtheta(path: &Path, w: &WTheta) -> Result<()> {
    let mut out = String::new();
    out.push_str("# theta_edges_arcmin: ");
    out.push_str(&w.edges.iter().map(|e| e.to_string()).collect::<Vec<_>>().join(","));
    out.push('\n');
    out.push_str("theta_arcmin,w,err,npairs\n");
    for b in 0..w.w.len() {
        out.push_str(&format!(
            "{},{},{},{}\n",
            fmt(w.theta[b]),
            fmt(w.w[b]),
            fmt(w.err[b]),
            fmt(w.npairs[b])
        ));
    }
    std::fs::write(path, out).map_err(io_err(path))
}

pub fn read_wtheta(path: &Path) -> Result<WTheta> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    let mut edges = Vec::new();
    let mut rows = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if let Some(rest) = line.strip_prefix("# theta_edges_arcmin:") {
            edges = rest
                .split(',')
                .map(|s| s.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| Error::Parse {
                    path: path.into(),
                    line: lineno + 1,
                    message: "bad edge list".into(),
                })?;
            continue;
        }
        if line.starts_with('#') || line.starts_with("theta_arcmin") || line.trim().is_empty() {
            continue;
        }
        let parts: Vec<&str> = line.split(',').collect();
        if parts.len() != 4 {
            return Err(Error::Parse {
                path: path.into(),
                line: lineno + 1,
                message: "expected 4 columns".into(),
            });
        }
        let p = |s: &str| -> f64 {
            let t = s.trim();
            if t == "nan" {
                f64::NAN
            } else {
                t.parse().unwrap_or(f64::NAN)
            }
        };
        rows.push((p(parts[0]), p(parts[1]), p(parts[2]), p(parts[3])));
    }
    if edges.len() != rows.len() + 1 {
        return Err(Error::Parse {
            path: path.into(),
            line: 0,
            message: format!("{} edges vs {} rows", edges.len(), rows.len()),
        });
    }
    let nlags = rows.iter().map(|r| if r.1.is_nan() { 0 } else { 1 }).collect();
    Ok(WTheta {
        edges,
        theta: rows.iter().map(|r| r.0).collect(),
        w: rows.iter().map(|r| r.1).collect(),
        err: rows.iter().map(|r| r.2).collect(),
        npairs: rows.iter().map(|r| r.3).collect(),
        nlags,
    })
}

/// 2D correlation map as a flat text grid with a dims/cell-size header.
pub fn write_w2d(path: &Path, map: &crate::angcorr::WMap) -> Result<()> {
    let nlx = map.n_lags_x();
    let nly = map.n_lags_y();
    let mut out = String::new();
    out.push_str(&format!("# nlx {nlx} nly {nly} cell_arcmin {}\n", map.cell_arcmin));
    out.push_str("# rows are across-scan lags, columns along-scan; censored/invalid as nan\n");
    for ly in 0..nly {
        let mut row = Vec::with_capacity(nlx);
        for lx in 0..nlx {
            let idx = ly * nlx + lx;
            let v = if map.valid[idx] && !map.censored[idx] {
                map.w[idx]
            } else {
                f64::NAN
            };
            row.push(fmt(v));
        }
        out.push_str(&row.join(" "));
        out.push('\n');
    }
    std::fs::write(path, out).map_err(io_err(path))
}

/// Likelihood surface: `sigma8,gamma,lnl` rows.
pub fn write_surface(path: &Path, s: &LikelihoodSurface) -> Result<()> {
    let mut out = String::from("sigma8,gamma,lnl\n");
    for (i, &s8) in s.sigma8.iter().enumerate() {
        for (j, &g) in s.gamma.iter().enumerate() {
            out.push_str(&format!("{s8},{g},{}\n", s.lnl_at(i, j)));
        }
    }
    std::fs::write(path, out).map_err(io_err(path))
}

/// Peak, refinement, Fisher matrix and 1-sigma intervals.
pub fn write_surface_summary(path: &Path, s: &LikelihoodSurface) -> Result<()> {
    let (ps, pg) = s.peak_params();
    let mut out = String::from("# likelihood summary\n");
    out.push_str(&format!("peak_sigma8,{ps}\n"));
    out.push_str(&format!("peak_gamma,{pg}\n"));
    out.push_str(&format!("peak_lnl,{}\n", s.peak_lnl));
    out.push_str(&format!("refined_sigma8,{}\n", s.refined_peak.0));
    out.push_str(&format!("refined_gamma,{}\n", s.refined_peak.1));
    out.push_str(&format!("boundary_peak,{}\n", s.boundary_peak));
    if let Some(f) = s.fisher {
        out.push_str(&format!("fisher_ss,{}\n", f[0][0]));
        out.push_str(&format!("fisher_sg,{}\n", f[0][1]));
        out.push_str(&format!("fisher_gg,{}\n", f[1][1]));
    }
    if let Some([es, eg]) = s.sigma_1d {
        out.push_str(&format!("sigma8_1sigma,{es}\n"));
        out.push_str(&format!("gamma_1sigma,{eg}\n"));
    }
    std::fs::write(path, out).map_err(io_err(path))
}

// ---------------------------------------------------------------------------
// SVG plots

struct SvgCanvas {
    body: String,
}

impl SvgCanvas {
    fn new(width: f64, height: f64) -> Self {
        let mut body = String::new();
        body.push_str(&format!(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width}\" height=\"{height}\" viewBox=\"0 0 {width} {height}\">\n"
        ));
        body.push_str(&format!(
            "<rect x=\"0\" y=\"0\" width=\"{width}\" height=\"{height}\" fill=\"white\"/>\n"
        ));
        SvgCanvas { body }
    }

    fn line(&mut self, x1: f64, y1: f64, x2: f64, y2: f64, color: &str, width: f64) {
        self.body.push_str(&format!(
            "<line x1=\"{x1:.2}\" y1=\"{y1:.2}\" x2=\"{x2:.2}\" y2=\"{y2:.2}\" stroke=\"{color}\" stroke-width=\"{width}\"/>\n"
        ));
    }

    fn polyline(&mut self, pts: &[(f64, f64)], color: &str, width: f64) {
        if pts.len() < 2 {
            return;
        }
        let path: Vec<String> = pts.iter().map(|&(x, y)| format!("{x:.2},{y:.2}")).collect();
        self.body.push_str(&format!(
            "<polyline points=\"{}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"{width}\"/>\n",
            path.join(" ")
        ));
    }

    fn circle(&mut self, x: f64, y: f64, r: f64, color: &str) {
        self.body.push_str(&format!(
            "<circle cx=\"{x:.2}\" cy=\"{y:.2}\" r=\"{r:.2}\" fill=\"{color}\"/>\n"
        ));
    }

    fn rect(&mut self, x: f64, y: f64, w: f64, h: f64, color: &str) {
        self.body.push_str(&format!(
            "<rect x=\"{x:.2}\" y=\"{y:.2}\" width=\"{w:.2}\" height=\"{h:.2}\" fill=\"{color}\"/>\n"
        ));
    }

    fn text(&mut self, x: f64, y: f64, size: f64, anchor: &str, s: &str) {
        self.body.push_str(&format!(
            "<text x=\"{x:.2}\" y=\"{y:.2}\" font-size=\"{size}\" font-family=\"sans-serif\" text-anchor=\"{anchor}\">{s}</text>\n"
        ));
    }

    fn finish(mut self, path: &Path) -> Result<()> {
        self.body.push_str("</svg>\n");
        std::fs::write(path, self.body).map_err(io_err(path))
    }
}

/// Log-log w(theta) plot: faint per-stripe curves, bold combined curve with
/// error bars. Only positive values appear on the log scale.
pub fn plot_wtheta_svg(
    path: &Path,
    per_stripe: &[(String, WTheta)],
    combined: Option<&WTheta>,
) -> Result<()> {
    let (width, height) = (640.0, 480.0);
    let (ml, mr, mt, mb) = (70.0, 20.0, 20.0, 50.0);
    let mut canvas = SvgCanvas::new(width, height);

    let mut xs: Vec<f64> = Vec::new();
    let mut ys: Vec<f64> = Vec::new();
    {
        let mut visit = |w: &WTheta| {
            for b in 0..w.w.len() {
                if w.theta[b].is_finite() && w.theta[b] > 0.0 && w.w[b].is_finite() && w.w[b] > 0.0
                {
                    xs.push(w.theta[b]);
                    ys.push(w.w[b]);
                }
            }
        };
        for (_, w) in per_stripe {
            visit(w);
        }
        if let Some(c) = combined {
            visit(c);
        }
    }
    if xs.is_empty() {
        canvas.text(width / 2.0, height / 2.0, 14.0, "middle", "no positive w(theta) values");
        return canvas.finish(path);
    }
    let (x0, x1) = log_range(&xs);
    let (y0, y1) = log_range(&ys);
    let sx = |v: f64| ml + (v.log10() - x0) / (x1 - x0) * (width - ml - mr);
    let sy = |v: f64| height - mb - (v.log10() - y0) / (y1 - y0) * (height - mt - mb);

    axes_log(&mut canvas, ml, mr, mt, mb, width, height, x0, x1, y0, y1);
    canvas.text(width / 2.0, height - 10.0, 12.0, "middle", "theta [arcmin]");
    canvas.text(14.0, mt + 6.0, 12.0, "start", "w(theta)");

    for (_, w) in per_stripe {
        let pts: Vec<(f64, f64)> = (0..w.w.len())
            .filter(|&b| w.theta[b] > 0.0 && w.w[b].is_finite() && w.w[b] > 0.0)
            .map(|b| (sx(w.theta[b]), sy(w.w[b])))
            .collect();
        canvas.polyline(&pts, "#9ecae1", 1.0);
    }
    if let Some(c) = combined {
        let pts: Vec<(f64, f64)> = (0..c.w.len())
            .filter(|&b| c.theta[b] > 0.0 && c.w[b].is_finite() && c.w[b] > 0.0)
            .map(|b| (sx(c.theta[b]), sy(c.w[b])))
            .collect();
        canvas.polyline(&pts, "#08519c", 2.0);
        for b in 0..c.w.len() {
            if c.theta[b] > 0.0 && c.w[b].is_finite() && c.w[b] > 0.0 {
                let x = sx(c.theta[b]);
                let lo = (c.w[b] - c.err[b]).max(10f64.powf(y0));
                let hi = c.w[b] + c.err[b];
                if lo > 0.0 && hi > 0.0 {
                    canvas.line(x, sy(lo), x, sy(hi), "#08519c", 1.0);
                }
                canvas.circle(x, sy(c.w[b]), 2.5, "#08519c");
            }
        }
    }
    canvas.finish(path)
}

fn log_range(vals: &[f64]) -> (f64, f64) {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for &v in vals {
        lo = lo.min(v.log10());
        hi = hi.max(v.log10());
    }
    if !(hi > lo) {
        (lo - 0.5, lo + 0.5)
    } else {
        (lo - 0.05 * (hi - lo), hi + 0.05 * (hi - lo))
    }
}

#[allow(clippy::too_many_arguments)]
fn axes_log(
    canvas: &mut SvgCanvas,
    ml: f64,
    mr: f64,
    mt: f64,
    mb: f64,
    width: f64,
    height: f64,
    x0: f64,
    x1: f64,
    y0: f64,
    y1: f64,
) {
    canvas.line(ml, height - mb, width - mr, height - mb, "black", 1.0);
    canvas.line(ml, mt, ml, height - mb, "black", 1.0);
    for d in (x0.floor() as i64)..=(x1.ceil() as i64) {
        let v = d as f64;
        if v < x0 || v > x1 {
            continue;
        }
        let x = ml + (v - x0) / (x1 - x0) * (width - ml - mr);
        canvas.line(x, height - mb, x, height - mb + 5.0, "black", 1.0);
        canvas.text(x, height - mb + 18.0, 10.0, "middle", &format!("1e{d}"));
    }
    for d in (y0.floor() as i64)..=(y1.ceil() as i64) {
        let v = d as f64;
        if v < y0 || v > y1 {
            continue;
        }
        let y = height - mb - (v - y0) / (y1 - y0) * (height - mt - mb);
        canvas.line(ml - 5.0, y, ml, y, "black", 1.0);
        canvas.text(ml - 8.0, y + 3.0, 10.0, "end", &format!("1e{d}"));
    }
}

/// Likelihood surface heat map with the peak marked.
pub fn plot_surface_svg(path: &Path, s: &LikelihoodSurface) -> Result<()> {
    let (width, height) = (560.0, 480.0);
    let (ml, mr, mt, mb) = (80.0, 20.0, 20.0, 60.0);
    let mut canvas = SvgCanvas::new(width, height);
    let n_s8 = s.sigma8.len();
    let n_g = s.gamma.len();
    let lo = s.lnl.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = s.peak_lnl;
    let cw = (width - ml - mr) / n_s8 as f64;
    let ch = (height - mt - mb) / n_g as f64;
    for i in 0..n_s8 {
        for j in 0..n_g {
            let t = if hi > lo { ((s.lnl_at(i, j) - lo) / (hi - lo)).clamp(0.0, 1.0) } else { 1.0 };
            let r = (255.0 * t) as u8;
            let g = (220.0 * t.powf(0.7)) as u8;
            let b = (80.0 + 100.0 * (1.0 - t)) as u8;
            canvas.rect(
                ml + i as f64 * cw,
                height - mb - (j + 1) as f64 * ch,
                cw + 0.5,
                ch + 0.5,
                &format!("rgb({r},{g},{b})"),
            );
        }
    }
    let (pi, pj) = s.peak;
    canvas.circle(
        ml + (pi as f64 + 0.5) * cw,
        height - mb - (pj as f64 + 0.5) * ch,
        4.0,
        "red",
    );
    canvas.text(width / 2.0, height - 12.0, 12.0, "middle", "sigma8 (columns)");
    canvas.text(16.0, mt + 8.0, 12.0, "start", "gamma (rows)");
    canvas.text(
        width / 2.0,
        height - 30.0,
        10.0,
        "middle",
        &format!(
            "peak sigma8 = {:.4}, gamma = {:.4}, lnL = {:.3}",
            s.peak_params().0,
            s.peak_params().1,
            s.peak_lnl
        ),
    );
    canvas.finish(path)
}
