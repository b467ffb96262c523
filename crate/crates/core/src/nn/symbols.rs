//! Positional encodings, symbol banks, and token embeddings.

use crate::engine::{ParamStore, Pid, Rng, Scalar, Tape, Tensor, Var};
use crate::error::{LabError, Result};

/// Sinusoidal positional table [max_len, d]: even slots sin, odd slots cos,
/// over a geometric frequency ladder with base 10000. Requires even d.
pub fn sinusoidal_bank<T: Scalar>(max_len: usize, d: usize) -> Result<Tensor<T>> {
    if d == 0 || d % 2 != 0 {
        return Err(LabError::config(format!(
            "sinusoidal bank needs even positive width, got {d}"
        )));
    }
    if max_len == 0 {
        return Err(LabError::config("sinusoidal bank needs max_len >= 1"));
    }
    let mut data = vec![T::ZERO; max_len * d];
    for pos in 0..max_len {
        for i in 0..d / 2 {
            let freq = 1.0 / 10000f64.powf(2.0 * i as f64 / d as f64);
            let angle = pos as f64 * freq;
            data[pos * d + 2 * i] = T::from_f64(angle.sin());
            data[pos * d + 2 * i + 1] = T::from_f64(angle.cos());
        }
    }
    Tensor::new(vec![max_len, d], data)
}

/// How the symbol vectors of an Abstractor are produced.
#[derive(Copy, Clone, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SymbolMode {
    /// Trainable vectors, one per position.
    Learned,
    /// Frozen sinusoidal vectors, one per position.
    Sinusoidal,
    /// Trainable vectors indexed by relative offset j-i; 2*max_len-1 rows,
    /// row max_len-1+delta holding offset delta.
    PositionRelative,
}

#[derive(Debug)]
enum SymbolSource<T> {
    Param(Pid),
    Frozen(Tensor<T>),
}

/// A bank of symbol vectors serving sequences up to max_len.
#[derive(Debug)]
pub struct SymbolBank<T> {
    pub mode: SymbolMode,
    pub max_len: usize,
    pub d_s: usize,
    source: SymbolSource<T>,
}

impl<T: Scalar> SymbolBank<T> {
    pub fn init(
        store: &mut ParamStore<T>,
        name: &str,
        mode: SymbolMode,
        max_len: usize,
        d_s: usize,
        rng: &mut Rng,
    ) -> Result<Self> {
        if max_len == 0 || d_s == 0 {
            return Err(LabError::config(format!(
                "symbol bank {name} needs positive max_len and d_s"
            )));
        }
        let source = match mode {
            SymbolMode::Learned => {
                let init = Tensor::rand_normal(rng, &[max_len, d_s], 1.0 / (d_s as f64).sqrt());
                SymbolSource::Param(store.add(format!("{name}.symbols"), init)?)
            }
            SymbolMode::Sinusoidal => SymbolSource::Frozen(sinusoidal_bank(max_len, d_s)?),
            SymbolMode::PositionRelative => {
                let rows = 2 * max_len - 1;
                let init = Tensor::rand_normal(rng, &[rows, d_s], 1.0 / (d_s as f64).sqrt());
                SymbolSource::Param(store.add(format!("{name}.symbols"), init)?)
            }
        };
        Ok(SymbolBank {
            mode,
            max_len,
            d_s,
            source,
        })
    }

    pub fn param_count<T2: Scalar>(&self, store: &ParamStore<T>) -> usize {
        match &self.source {
            SymbolSource::Param(p) => store.get(*p).len(),
            SymbolSource::Frozen(_) => 0,
        }
    }

    fn full(&self, tape: &mut Tape<T>, store: &ParamStore<T>) -> Var {
        match &self.source {
            SymbolSource::Param(p) => tape.param(store, *p),
            SymbolSource::Frozen(t) => tape.constant(t),
        }
    }

    /// First m symbol rows, shape [m, d_s]. Learned/sinusoidal modes only.
    pub fn bind(&self, tape: &mut Tape<T>, store: &ParamStore<T>, m: usize) -> Result<Var> {
        if self.mode == SymbolMode::PositionRelative {
            return Err(LabError::contract(
                "position-relative bank is indexed by offsets; use bind_offsets",
            ));
        }
        if m > self.max_len {
            return Err(LabError::capacity(format!(
                "sequence length {m} exceeds symbol bank capacity {}",
                self.max_len
            )));
        }
        let full = self.full(tape, store);
        if m == self.max_len {
            Ok(full)
        } else {
            tape.slice_rows(full, 0, m)
        }
    }

    /// Offset rows covering j-i in [-(m-1), m-1], shape [2m-1, d_s]; row
    /// m-1+delta holds offset delta. PositionRelative mode only.
    pub fn bind_offsets(&self, tape: &mut Tape<T>, store: &ParamStore<T>, m: usize) -> Result<Var> {
        if self.mode != SymbolMode::PositionRelative {
            return Err(LabError::contract(
                "offset binding requires a position-relative bank",
            ));
        }
        if m > self.max_len {
            return Err(LabError::capacity(format!(
                "sequence length {m} exceeds offset bank capacity {}",
                self.max_len
            )));
        }
        let full = self.full(tape, store);
        // bank row max_len-1+delta; needed deltas -(m-1)..=(m-1)
        tape.slice_rows(full, self.max_len - m, 2 * m - 1)
    }
}

/// Trainable token-embedding table [vocab, d] with Glorot-uniform init.
#[derive(Clone, Debug)]
pub struct EmbeddingP {
    pub table: Pid,
    pub vocab: usize,
    pub d: usize,
}

impl EmbeddingP {
    pub fn init<T: Scalar>(
        store: &mut ParamStore<T>,
        name: &str,
        vocab: usize,
        d: usize,
        rng: &mut Rng,
    ) -> Result<Self> {
        if vocab == 0 || d == 0 {
            return Err(LabError::config(format!(
                "embedding {name} needs positive vocab and width"
            )));
        }
        let limit = (6.0 / (vocab + d) as f64).sqrt();
        let table = store.add(
            format!("{name}.table"),
            Tensor::rand_uniform(rng, &[vocab, d], -limit, limit),
        )?;
        Ok(EmbeddingP { table, vocab, d })
    }

    /// Embeds a [B, L] id grid to [B, L, d], scaled by sqrt(d), with
    /// sinusoidal position rows added.
    pub fn embed_with_positions<T: Scalar>(
        &self,
        tape: &mut Tape<T>,
        store: &ParamStore<T>,
        ids: &[usize],
        batch: usize,
        len: usize,
    ) -> Result<Var> {
        if ids.len() != batch * len {
            return Err(LabError::dim("embed ids", &[batch, len], &[ids.len()]));
        }
        let table = tape.param(store, self.table);
        let flat = tape.embedding(table, ids)?;
        let scaled = tape.scale(flat, (self.d as f64).sqrt())?;
        let shaped = tape.reshape(scaled, vec![batch, len, self.d])?;
        let pos = sinusoidal_bank::<T>(len, self.d)?;
        let posv = tape.constant(&pos);
        tape.add_broadcast(shaped, posv)
    }

    pub fn param_count<T: Scalar>(&self, store: &ParamStore<T>) -> usize {
        store.get(self.table).len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sinusoidal_position_zero_alternates_zero_one() {
        let bank = sinusoidal_bank::<f64>(4, 6).unwrap();
        for i in 0..3 {
            assert_eq!(bank.at(&[0, 2 * i]), 0.0);
            assert_eq!(bank.at(&[0, 2 * i + 1]), 1.0);
        }
    }

    #[test]
    fn sinusoidal_rows_have_norm_sqrt_half_d() {
        let d = 16;
        let bank = sinusoidal_bank::<f64>(32, d).unwrap();
        let expect = (d as f64 / 2.0).sqrt();
        for p in 0..32 {
            let norm: f64 = (0..d).map(|j| bank.at(&[p, j]).powi(2)).sum::<f64>().sqrt();
            assert!((norm - expect).abs() < 1e-4, "row {p} norm {norm}");
        }
    }

    #[test]
    fn sinusoidal_rows_are_pairwise_distinct() {
        let bank = sinusoidal_bank::<f64>(64, 8).unwrap();
        for p in 0..64 {
            for q in (p + 1)..64 {
                let dist: f64 = (0..8)
                    .map(|j| (bank.at(&[p, j]) - bank.at(&[q, j])).powi(2))
                    .sum();
                assert!(dist > 1e-8, "rows {p} and {q} coincide");
            }
        }
    }

    #[test]
    fn odd_width_is_rejected() {
        assert!(sinusoidal_bank::<f64>(4, 7).is_err());
    }

    #[test]
    fn learned_bank_binds_first_m_rows() {
        let mut rng = Rng::new(31);
        let mut store = ParamStore::<f64>::new();
        let bank =
            SymbolBank::init(&mut store, "sym", SymbolMode::Learned, 6, 4, &mut rng).unwrap();
        let mut tape = Tape::new();
        let v = bank.bind(&mut tape, &store, 3).unwrap();
        assert_eq!(tape.shape(v), &[3, 4]);
        let full = store.get(store.pid_by_name("sym.symbols").unwrap());
        assert_eq!(tape.value(v), &full.data()[..12]);
        assert!(bank.bind(&mut tape, &store, 7).is_err(), "capacity check");
    }

    #[test]
    fn offset_bank_covers_centered_window() {
        let mut rng = Rng::new(32);
        let mut store = ParamStore::<f64>::new();
        let bank = SymbolBank::init(
            &mut store,
            "rel",
            SymbolMode::PositionRelative,
            5,
            3,
            &mut rng,
        )
        .unwrap();
        let mut tape = Tape::new();
        let v = bank.bind_offsets(&mut tape, &store, 3).unwrap();
        assert_eq!(tape.shape(v), &[5, 3]);
        let full = store.get(store.pid_by_name("rel.symbols").unwrap());
        // rows 2..7 of the 9-row bank: offsets -2..=2 centered at row 4
        assert_eq!(tape.value(v), &full.data()[2 * 3..7 * 3]);
        assert!(bank.bind(&mut tape, &store, 3).is_err(), "mode guard");
    }

    #[test]
    fn embedding_adds_positions_after_scaling() {
        let mut rng = Rng::new(33);
        let mut store = ParamStore::<f64>::new();
        let emb = EmbeddingP::init(&mut store, "tok", 5, 4, &mut rng).unwrap();
        let mut tape = Tape::new();
        let v = emb
            .embed_with_positions(&mut tape, &store, &[1, 1, 2, 0], 2, 2)
            .unwrap();
        assert_eq!(tape.shape(v), &[2, 2, 4]);
        let table = store.get(emb.table);
        let pos = sinusoidal_bank::<f64>(2, 4).unwrap();
        // batch 0, position 1, token 1
        for c in 0..4 {
            let expect = table.at(&[1, c]) * 2.0 + pos.at(&[1, c]);
            assert!((tape.value(v)[4 + c] - expect).abs() < 1e-12);
        }
    }
}
