//! Shared Gaussian codebook, bit/codeword mapping, ID-bit index partition.
//!
//! The ID bits occupy the most significant positions of the codeword
//! index, so each user owns a contiguous index interval and ownership of
//! a recovered index is a single shift.

use ndarray::Axis;
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::channel::id_bit_count;
use crate::error::{Error, Result};
use crate::linalg::{CMat, CVec};

/// M x N codebook with the per-user partition of its column index space.
#[derive(Debug, Clone)]
pub struct Codebook {
    /// M x N matrix of i.i.d. CN(0,1) entries.
    pub matrix: CMat,
    /// Code bits per block (M_b); N = 2^M_b.
    pub m_bits: usize,
    /// ID bits (M_K = ceil(log2 K)).
    pub id_bits: usize,
    /// Number of users sharing the codebook.
    pub n_users: usize,
}

impl Codebook {
    pub fn codeword_len(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn n_codewords(&self) -> usize {
        self.matrix.ncols()
    }

    pub fn data_bits(&self) -> usize {
        self.m_bits - self.id_bits
    }

    /// Admissible index range of a user: a contiguous half-open interval.
    pub fn user_range(&self, user: usize) -> std::ops::Range<usize> {
        let width = 1usize << self.data_bits();
        user * width..(user + 1) * width
    }
}

/// A single user-block payload and its codeword index.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BlockMessage {
    pub user: usize,
    pub block: usize,
    /// Payload bits (length M_b - M_K), most significant first.
    pub data_bits: Vec<bool>,
    /// Full code bit vector b_k: ID bits then data bits.
    pub full_bits: Vec<bool>,
    /// Decimal value of `full_bits`; the selected codebook column.
    pub codeword_index: usize,
}

fn bits_to_value(bits: &[bool]) -> usize {
    bits.iter().fold(0, |acc, &b| (acc << 1) | b as usize)
}

fn value_to_bits(value: usize, width: usize) -> Vec<bool> {
    (0..width).rev().map(|i| (value >> i) & 1 == 1).collect()
}

/// Generate the shared codebook: M x 2^m_bits i.i.d. CN(0,1) entries.
pub fn gen_codebook(
    m: usize,
    m_bits: usize,
    k_users: usize,
    rng: &mut impl Rng,
) -> Result<Codebook> {
    if m == 0 || k_users == 0 {
        return Err(Error::Config(
            "codebook needs m >= 1 and k_users >= 1".into(),
        ));
    }
    if m_bits == 0 || m_bits > 24 {
        return Err(Error::Config(format!(
            "m_bits {} outside supported range 1..=24",
            m_bits
        )));
    }
    let id_bits = id_bit_count(k_users);
    if id_bits > m_bits {
        return Err(Error::Config(format!(
            "{} users need {} ID bits but codewords carry only {} bits",
            k_users, id_bits, m_bits
        )));
    }
    let n = 1usize << m_bits;
    let s = 0.5f64.sqrt();
    let matrix = CMat::from_shape_fn((m, n), |_| {
        Complex64::new(
            s * rng.sample::<f64, _>(StandardNormal),
            s * rng.sample::<f64, _>(StandardNormal),
        )
    });
    Ok(Codebook {
        matrix,
        m_bits,
        id_bits,
        n_users: k_users,
    })
}

/// Map a user's payload bits to its codeword.
///
/// The codeword index has binary expansion `[binary(user) | data_bits]`;
/// the returned column equals `C * gamma` with `gamma` the canonical unit
/// vector at that index. The block number is assigned by the caller.
pub fn encode(book: &Codebook, user: usize, data_bits: &[bool]) -> Result<(BlockMessage, CVec)> {
    if user >= book.n_users {
        return Err(Error::Encoding(format!(
            "user {} out of range (K = {})",
            user, book.n_users
        )));
    }
    if data_bits.len() != book.data_bits() {
        return Err(Error::Encoding(format!(
            "expected {} data bits, got {}",
            book.data_bits(),
            data_bits.len()
        )));
    }
    let index = (user << book.data_bits()) | bits_to_value(data_bits);
    let mut full_bits = value_to_bits(user, book.id_bits);
    full_bits.extend_from_slice(data_bits);
    let codeword = book.matrix.index_axis(Axis(1), index).to_owned();
    Ok((
        BlockMessage {
            user,
            block: 0,
            data_bits: data_bits.to_vec(),
            full_bits,
            codeword_index: index,
        },
        codeword,
    ))
}

/// Recover (user, data bits) from a codebook index.
///
/// For K not a power of two the top of the index space is unassigned;
/// indices landing there are reported as [`Error::InvalidUser`].
pub fn decode_index(book: &Codebook, n: usize) -> Result<(usize, Vec<bool>)> {
    if n >= book.n_codewords() {
        return Err(Error::Encoding(format!(
            "index {} out of range (N = {})",
            n,
            book.n_codewords()
        )));
    }
    let user = n >> book.data_bits();
    if user >= book.n_users {
        return Err(Error::InvalidUser(n));
    }
    let data = value_to_bits(n & ((1 << book.data_bits()) - 1), book.data_bits());
    Ok((user, data))
}
