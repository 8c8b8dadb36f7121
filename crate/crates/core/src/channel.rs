//! On-grid mmWave channel realizations and their sparse angular factors.
//!
//! Steering dictionaries are built on a grid that is uniform in *spatial
//! frequency* (the cosine domain). On that grid the Khatri-Rao column
//! merge of the cascaded channel reduces to an exact modular shift of the
//! RIS grid index, which is what [`merge_cascade`] implements.

use std::io::{BufRead, Write};

use ndarray::Axis;
use num_complex::Complex64;
use rand::seq::index::sample;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{adjoint, matmul, matvec, CMat, CVec};

/// Scenario dimensions and run parameters shared across the pipeline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemConfig {
    /// BS antennas (N_B).
    pub n_bs_antennas: usize,
    /// RIS elements (N_R).
    pub n_ris_elements: usize,
    /// Users (K).
    pub n_users: usize,
    /// BS-side grid size (G_B).
    pub grid_bs: usize,
    /// RIS-side grid size (G_R).
    pub grid_ris: usize,
    /// RIS-BS propagation paths (L_RB).
    pub paths_rb: usize,
    /// User-RIS propagation paths, identical for all users (L_RU).
    pub paths_ru: usize,
    /// Codeword length (M).
    pub codeword_len: usize,
    /// Code bits per block (M_b).
    pub bits_per_block: usize,
    /// Transmission blocks (J).
    pub n_blocks: usize,
    /// Per-entry receive SNR in dB; `inf` disables noise.
    pub snr_db: f64,
    pub seed: u64,
}

impl SystemConfig {
    /// ID bits per user: ceil(log2 K).
    pub fn id_bits(&self) -> usize {
        id_bit_count(self.n_users)
    }

    /// Cascade sparsity per user: L_RB * L_RU.
    pub fn cascade_sparsity(&self) -> usize {
        self.paths_rb * self.paths_ru
    }

    pub fn validate(&self) -> Result<()> {
        let err = |msg: String| Err(Error::Config(msg));
        if self.n_bs_antennas == 0
            || self.n_ris_elements == 0
            || self.n_users == 0
            || self.codeword_len == 0
            || self.n_blocks == 0
            || self.paths_rb == 0
            || self.paths_ru == 0
        {
            return err("all dimensions must be positive".into());
        }
        if self.bits_per_block == 0 || self.bits_per_block > 24 {
            return err(format!(
                "bits_per_block {} outside supported range 1..=24",
                self.bits_per_block
            ));
        }
        let m_k = self.id_bits();
        if m_k >= self.bits_per_block {
            return err(format!(
                "need ceil(log2 K)={} ID bits < bits_per_block={}",
                m_k, self.bits_per_block
            ));
        }
        if self.codeword_len < self.n_users {
            return err(format!(
                "codeword_len {} cannot support {} superposed users",
                self.codeword_len, self.n_users
            ));
        }
        if self.grid_bs < self.n_bs_antennas {
            return err(format!(
                "grid_bs {} < n_bs_antennas {}",
                self.grid_bs, self.n_bs_antennas
            ));
        }
        if self.grid_ris < self.n_ris_elements {
            return err(format!(
                "grid_ris {} < n_ris_elements {}",
                self.grid_ris, self.n_ris_elements
            ));
        }
        if self.paths_rb > self.grid_ris * self.grid_bs {
            return err("paths_rb exceeds RIS-BS grid size".into());
        }
        if self.paths_ru > self.grid_ris {
            return err("paths_ru exceeds RIS grid size".into());
        }
        if self.cascade_sparsity() > self.n_blocks * self.n_bs_antennas {
            return err(format!(
                "cascade sparsity {} exceeds measurement count J*N_B = {}",
                self.cascade_sparsity(),
                self.n_blocks * self.n_bs_antennas
            ));
        }
        Ok(())
    }
}

pub fn id_bit_count(n_users: usize) -> usize {
    if n_users <= 1 {
        0
    } else {
        (usize::BITS - (n_users - 1).leading_zeros()) as usize
    }
}

/// Unit-norm steering dictionaries for BS and RIS arrays.
#[derive(Debug, Clone)]
pub struct SteeringDictionary {
    /// N_B x G_B array response matrix at the BS.
    pub f_bs: CMat,
    /// N_R x G_R array response matrix at the RIS (shared by both hops).
    pub f_ris: CMat,
    /// Spatial frequency of each BS grid column, in [0, 2).
    pub freqs_bs: Vec<f64>,
    /// Spatial frequency of each RIS grid column, in [0, 2).
    pub freqs_ris: Vec<f64>,
}

/// Half-wavelength ULA steering vector at a given spatial frequency.
///
/// Entry n is `exp(i*pi*n*spatial_freq) / sqrt(n_elements)`, where
/// `spatial_freq = cos(angle)` folded into [0, 2).
pub fn steering_vector(n_elements: usize, spatial_freq: f64) -> CVec {
    let scale = 1.0 / (n_elements as f64).sqrt();
    CVec::from_shape_fn(n_elements, |n| {
        let phase = std::f64::consts::PI * n as f64 * spatial_freq;
        Complex64::from_polar(scale, phase)
    })
}

/// Dictionaries on the uniform spatial-frequency grid 2g/G.
///
/// With G = N the result is a unitary DFT-type matrix.
pub fn build_dictionaries(cfg: &SystemConfig) -> SteeringDictionary {
    let grid = |n: usize, g: usize| {
        let freqs: Vec<f64> = (0..g).map(|i| 2.0 * i as f64 / g as f64).collect();
        let mut f = CMat::zeros((n, g));
        for (j, &u) in freqs.iter().enumerate() {
            let col = steering_vector(n, u);
            for i in 0..n {
                f[[i, j]] = col[i];
            }
        }
        (f, freqs)
    };
    let (f_bs, freqs_bs) = grid(cfg.n_bs_antennas, cfg.grid_bs);
    let (f_ris, freqs_ris) = grid(cfg.n_ris_elements, cfg.grid_ris);
    SteeringDictionary {
        f_bs,
        f_ris,
        freqs_bs,
        freqs_ris,
    }
}

/// One channel draw plus its exact angular-domain factorizations.
#[derive(Debug, Clone)]
pub struct ChannelRealization {
    /// RIS-BS channel H_RB (N_R x N_B).
    pub h_rb: CMat,
    /// Angular-domain RIS-BS channel D_RB (G_R x G_B, L_RB nonzeros).
    pub d_rb: CMat,
    /// Per-user user-RIS channels h_RU,k (N_R).
    pub h_ru: Vec<CVec>,
    /// Per-user angular-domain vectors d_RU,k (G_R, L_RU nonzeros).
    pub d_ru: Vec<CVec>,
    /// Per-user cascaded channels H_k = diag(conj(h_RU,k)) H_RB.
    pub cascades: Vec<CMat>,
    /// Per-user merged angular cascades D_k (G_R x G_B).
    pub d_cascade: Vec<CMat>,
    /// RIS-BS path list: (RIS grid index, BS grid index, gain rho).
    pub rb_paths: Vec<(usize, usize, Complex64)>,
    /// Per-user path list: (RIS grid index, gain varrho).
    pub ru_paths: Vec<Vec<(usize, Complex64)>>,
}

fn complex_gaussian(rng: &mut impl Rng, var: f64) -> Complex64 {
    let s = (var / 2.0).sqrt();
    Complex64::new(
        s * rng.sample::<f64, _>(StandardNormal),
        s * rng.sample::<f64, _>(StandardNormal),
    )
}

/// Draw an on-grid channel realization.
///
/// Path grid indices are sampled uniformly without replacement per
/// channel; gains are CN(0, 1/L) and the Saleh-Valenzuela scale factors
/// sqrt(N_R N_B / L_RB) resp. sqrt(N_R / L_RU) are folded into the
/// angular-domain coefficients so the factorizations hold exactly.
pub fn sample_channel(
    cfg: &SystemConfig,
    dict: &SteeringDictionary,
    rng: &mut impl Rng,
) -> ChannelRealization {
    let g_r = cfg.grid_ris;
    let g_b = cfg.grid_bs;

    let rb_scale = ((cfg.n_ris_elements * cfg.n_bs_antennas) as f64 / cfg.paths_rb as f64).sqrt();
    let mut d_rb = CMat::zeros((g_r, g_b));
    let mut rb_paths = Vec::with_capacity(cfg.paths_rb);
    for flat in sample(rng, g_r * g_b, cfg.paths_rb) {
        let (i, j) = (flat / g_b, flat % g_b);
        let rho = complex_gaussian(rng, 1.0 / cfg.paths_rb as f64);
        d_rb[[i, j]] += rb_scale * rho;
        rb_paths.push((i, j, rho));
    }
    let h_rb = matmul(&matmul(&dict.f_ris, &d_rb), &adjoint(&dict.f_bs));

    let ru_scale = (cfg.n_ris_elements as f64 / cfg.paths_ru as f64).sqrt();
    let mut h_ru = Vec::with_capacity(cfg.n_users);
    let mut d_ru = Vec::with_capacity(cfg.n_users);
    let mut cascades = Vec::with_capacity(cfg.n_users);
    let mut d_cascade = Vec::with_capacity(cfg.n_users);
    let mut ru_paths = Vec::with_capacity(cfg.n_users);
    for _ in 0..cfg.n_users {
        let mut d = CVec::zeros(g_r);
        let mut paths = Vec::with_capacity(cfg.paths_ru);
        for i in sample(rng, g_r, cfg.paths_ru) {
            let varrho = complex_gaussian(rng, 1.0 / cfg.paths_ru as f64);
            d[i] += ru_scale * varrho;
            paths.push((i, varrho));
        }
        let h = matvec(&dict.f_ris, &d);

        let mut cascade = h_rb.clone();
        for (mut row, hv) in cascade.axis_iter_mut(Axis(0)).zip(h.iter()) {
            let c = hv.conj();
            row.mapv_inplace(|z| z * c);
        }

        d_cascade.push(merge_cascade(&d, &d_rb, cfg.n_ris_elements));
        cascades.push(cascade);
        h_ru.push(h);
        d_ru.push(d);
        ru_paths.push(paths);
    }

    ChannelRealization {
        h_rb,
        d_rb,
        h_ru,
        d_ru,
        cascades,
        d_cascade,
        rb_paths,
        ru_paths,
    }
}

/// Merge the two-hop angular factors into the cascade coefficient matrix.
///
/// On the uniform spatial-frequency grid, the Khatri-Rao column for the
/// RIS grid pair (i, j) equals `(1/sqrt(N_R))` times column `(j - i) mod
/// G_R` of the RIS dictionary, so row m of the result accumulates
/// `(1/sqrt(N_R)) * conj(d_ru_k[i]) * d_rb[j, :]` over all pairs with
/// `(j - i) mod G_R == m`. Index collisions across pairs accumulate.
pub fn merge_cascade(d_ru_k: &CVec, d_rb: &CMat, n_ris_elements: usize) -> CMat {
    let g_r = d_rb.nrows();
    let g_b = d_rb.ncols();
    assert_eq!(d_ru_k.len(), g_r, "merge_cascade: RIS grid sizes differ");
    let scale = 1.0 / (n_ris_elements as f64).sqrt();
    let mut out = CMat::zeros((g_r, g_b));
    for i in 0..g_r {
        let c = d_ru_k[i].conj() * scale;
        if c == Complex64::ZERO {
            continue;
        }
        for j in 0..g_r {
            let m = (j + g_r - i) % g_r;
            for b in 0..g_b {
                let v = d_rb[[j, b]];
                if v != Complex64::ZERO {
                    out[[m, b]] += c * v;
                }
            }
        }
    }
    out
}

// --- realization dump / load -------------------------------------------

fn write_matrix(w: &mut impl Write, name: &str, m: &CMat) -> Result<()> {
    writeln!(w, "matrix {} {} {}", name, m.nrows(), m.ncols())?;
    for row in m.rows() {
        let mut first = true;
        for z in row {
            if !first {
                write!(w, " ")?;
            }
            write!(w, "{} {}", z.re, z.im)?;
            first = false;
        }
        writeln!(w)?;
    }
    Ok(())
}

/// Dump a realization as self-describing text: a dimensions header, then
/// one `matrix <name> <rows> <cols>` section per matrix with row-major
/// `re im` pairs. Intended for regression fixtures.
pub fn write_realization(real: &ChannelRealization, w: &mut impl Write) -> Result<()> {
    let n_users = real.h_ru.len();
    writeln!(w, "risblind-realization v1")?;
    writeln!(
        w,
        "dims n_ris {} n_bs {} n_users {} grid_ris {} grid_bs {}",
        real.h_rb.nrows(),
        real.h_rb.ncols(),
        n_users,
        real.d_rb.nrows(),
        real.d_rb.ncols()
    )?;
    write_matrix(w, "h_rb", &real.h_rb)?;
    write_matrix(w, "d_rb", &real.d_rb)?;
    let col = |v: &CVec| {
        let mut m = CMat::zeros((v.len(), 1));
        for (i, z) in v.iter().enumerate() {
            m[[i, 0]] = *z;
        }
        m
    };
    for k in 0..n_users {
        write_matrix(w, &format!("h_ru_{}", k), &col(&real.h_ru[k]))?;
        write_matrix(w, &format!("d_ru_{}", k), &col(&real.d_ru[k]))?;
        write_matrix(w, &format!("cascade_{}", k), &real.cascades[k])?;
        write_matrix(w, &format!("d_cascade_{}", k), &real.d_cascade[k])?;
    }
    Ok(())
}

struct TokenReader<R: BufRead> {
    inner: R,
    tokens: Vec<String>,
    pos: usize,
}

impl<R: BufRead> TokenReader<R> {
    fn new(inner: R) -> Self {
        Self {
            inner,
            tokens: Vec::new(),
            pos: 0,
        }
    }

    fn next_line(&mut self) -> Result<Vec<String>> {
        let mut line = String::new();
        loop {
            line.clear();
            if self.inner.read_line(&mut line)? == 0 {
                return Err(Error::Parse("unexpected end of realization file".into()));
            }
            if !line.trim().is_empty() {
                return Ok(line.split_whitespace().map(str::to_string).collect());
            }
        }
    }

    fn next_token(&mut self) -> Result<String> {
        while self.pos >= self.tokens.len() {
            self.tokens = self.next_line()?;
            self.pos = 0;
        }
        let t = self.tokens[self.pos].clone();
        self.pos += 1;
        Ok(t)
    }

    fn next_f64(&mut self) -> Result<f64> {
        let t = self.next_token()?;
        t.parse()
            .map_err(|_| Error::Parse(format!("expected number, found {:?}", t)))
    }
}

fn read_matrix<R: BufRead>(r: &mut TokenReader<R>, expect_name: &str) -> Result<CMat> {
    let header = r.next_line()?;
    if header.len() != 4 || header[0] != "matrix" {
        return Err(Error::Parse(format!(
            "expected matrix header, found {:?}",
            header.join(" ")
        )));
    }
    if header[1] != expect_name {
        return Err(Error::Parse(format!(
            "expected matrix {:?}, found {:?}",
            expect_name, header[1]
        )));
    }
    let rows: usize = header[2]
        .parse()
        .map_err(|_| Error::Parse("bad row count".into()))?;
    let cols: usize = header[3]
        .parse()
        .map_err(|_| Error::Parse("bad column count".into()))?;
    let mut m = CMat::zeros((rows, cols));
    for i in 0..rows {
        for j in 0..cols {
            let re = r.next_f64()?;
            let im = r.next_f64()?;
            m[[i, j]] = Complex64::new(re, im);
        }
    }
    Ok(m)
}

/// Parse a realization written by [`write_realization`].
pub fn read_realization(reader: impl BufRead) -> Result<ChannelRealization> {
    let mut r = TokenReader::new(reader);
    let magic = r.next_line()?;
    if magic != ["risblind-realization", "v1"] {
        return Err(Error::Parse("not a risblind realization file".into()));
    }
    let dims = r.next_line()?;
    if dims.len() != 11 || dims[0] != "dims" {
        return Err(Error::Parse("malformed dims header".into()));
    }
    let field = |tag_idx: usize, name: &str| -> Result<usize> {
        if dims[tag_idx] != name {
            return Err(Error::Parse(format!("expected dims field {:?}", name)));
        }
        dims[tag_idx + 1]
            .parse()
            .map_err(|_| Error::Parse(format!("bad dims value for {:?}", name)))
    };
    let n_ris = field(1, "n_ris")?;
    let n_bs = field(3, "n_bs")?;
    let n_users = field(5, "n_users")?;
    let grid_ris = field(7, "grid_ris")?;
    let grid_bs = field(9, "grid_bs")?;

    let h_rb = read_matrix(&mut r, "h_rb")?;
    let d_rb = read_matrix(&mut r, "d_rb")?;
    if h_rb.dim() != (n_ris, n_bs) || d_rb.dim() != (grid_ris, grid_bs) {
        return Err(Error::Parse(
            "matrix shapes disagree with dims header".into(),
        ));
    }
    let mut h_ru = Vec::with_capacity(n_users);
    let mut d_ru = Vec::with_capacity(n_users);
    let mut cascades = Vec::with_capacity(n_users);
    let mut d_cascade = Vec::with_capacity(n_users);
    for k in 0..n_users {
        let h = read_matrix(&mut r, &format!("h_ru_{}", k))?;
        let d = read_matrix(&mut r, &format!("d_ru_{}", k))?;
        if h.dim() != (n_ris, 1) || d.dim() != (grid_ris, 1) {
            return Err(Error::Parse("per-user vector shape mismatch".into()));
        }
        h_ru.push(h.index_axis(Axis(1), 0).to_owned());
        d_ru.push(d.index_axis(Axis(1), 0).to_owned());
        cascades.push(read_matrix(&mut r, &format!("cascade_{}", k))?);
        d_cascade.push(read_matrix(&mut r, &format!("d_cascade_{}", k))?);
    }

    // Reconstruct path lists from the angular-domain nonzeros; the
    // Saleh-Valenzuela scale factor is determined by the nonzero count.
    let mut rb_paths = Vec::new();
    for i in 0..grid_ris {
        for j in 0..grid_bs {
            if d_rb[[i, j]] != Complex64::ZERO {
                rb_paths.push((i, j, d_rb[[i, j]]));
            }
        }
    }
    let l_rb = rb_paths.len().max(1);
    let rb_scale = ((n_ris * n_bs) as f64 / l_rb as f64).sqrt();
    for p in &mut rb_paths {
        p.2 /= rb_scale;
    }
    let mut ru_paths = Vec::with_capacity(n_users);
    for d in &d_ru {
        let mut paths: Vec<(usize, Complex64)> = d
            .iter()
            .enumerate()
            .filter(|(_, z)| **z != Complex64::ZERO)
            .map(|(i, z)| (i, *z))
            .collect();
        let l_ru = paths.len().max(1);
        let ru_scale = (n_ris as f64 / l_ru as f64).sqrt();
        for p in &mut paths {
            p.1 /= ru_scale;
        }
        ru_paths.push(paths);
    }

    Ok(ChannelRealization {
        h_rb,
        d_rb,
        h_ru,
        d_ru,
        cascades,
        d_cascade,
        rb_paths,
        ru_paths,
    })
}
