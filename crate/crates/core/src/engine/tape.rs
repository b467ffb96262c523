//! Reverse-mode automatic differentiation on a dynamically recorded tape.
//!
//! A forward pass pushes nodes (value buffers plus backward closures) onto a
//! [`Tape`]; [`Tape::backward`] walks the nodes in reverse creation order and
//! accumulates gradients. A tape lives for one forward/backward pass and is
//! confined to one worker; parameters live in a [`ParamStore`] and are bound
//! onto the tape on first use, so a parameter appearing in several places
//! (e.g. tied relation encoders) accumulates one gradient.
//!
//! Layout conventions: row-major data, batch axes lead, matrix ops act on the
//! trailing two axes. All accumulation is sequential, so identical inputs
//! reproduce bit-identical outputs and gradients.

use super::scalar::Scalar;
use super::tensor::{numel, Tensor};
use crate::error::{LabError, Result};

/// Handle to a node on the tape.
#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub struct Var(pub(crate) usize);

/// Handle to a parameter in a [`ParamStore`].
#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub struct Pid(pub usize);

/// Elementwise activation kinds.
#[derive(Copy, Clone, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ElemKind {
    Relu,
    Sigmoid,
    Tanh,
    Linear,
}

// ── parameter store ────────────────────────────────────────────

#[derive(Debug)]
struct ParamEntry<T> {
    name: String,
    value: Tensor<T>,
}

/// Named trainable tensors with gradient accumulators.
#[derive(Debug)]
pub struct ParamStore<T> {
    entries: Vec<ParamEntry<T>>,
}

impl<T: Scalar> Default for ParamStore<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> ParamStore<T> {
    pub fn new() -> Self {
        ParamStore {
            entries: Vec::new(),
        }
    }

    /// Registers a tensor as a trainable parameter. Names must be unique.
    pub fn add(&mut self, name: impl Into<String>, mut value: Tensor<T>) -> Result<Pid> {
        let name = name.into();
        if self.entries.iter().any(|e| e.name == name) {
            return Err(LabError::config(format!("duplicate parameter name {name:?}")));
        }
        value.set_requires_grad(true);
        self.entries.push(ParamEntry { name, value });
        Ok(Pid(self.entries.len() - 1))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn name(&self, pid: Pid) -> &str {
        &self.entries[pid.0].name
    }

    pub fn get(&self, pid: Pid) -> &Tensor<T> {
        &self.entries[pid.0].value
    }

    pub fn get_mut(&mut self, pid: Pid) -> &mut Tensor<T> {
        &mut self.entries[pid.0].value
    }

    pub fn pid_by_name(&self, name: &str) -> Option<Pid> {
        self.entries.iter().position(|e| e.name == name).map(Pid)
    }

    pub fn pids(&self) -> impl Iterator<Item = Pid> {
        (0..self.entries.len()).map(Pid)
    }

    pub fn zero_grads(&mut self) {
        for e in &mut self.entries {
            e.value.zero_grad();
        }
    }

    /// Total scalar parameter count.
    pub fn total_params(&self) -> usize {
        self.entries.iter().map(|e| e.value.len()).sum()
    }

    pub fn snapshot(&self) -> Vec<Vec<T>> {
        self.entries.iter().map(|e| e.value.data().to_vec()).collect()
    }

    pub fn restore(&mut self, snap: &[Vec<T>]) {
        assert_eq!(snap.len(), self.entries.len(), "snapshot arity mismatch");
        for (e, s) in self.entries.iter_mut().zip(snap) {
            e.value.data_mut().copy_from_slice(s);
        }
    }
}

// ── tape internals ─────────────────────────────────────────────

type BackFn<T> = Box<dyn Fn(&[T], usize, &[Node<T>], &mut GradStore<T>)>;

struct Node<T> {
    shape: Vec<usize>,
    data: Vec<T>,
    back: Option<BackFn<T>>,
}

struct GradStore<T> {
    slots: Vec<Option<Vec<T>>>,
}

impl<T: Scalar> GradStore<T> {
    fn new(n: usize) -> Self {
        GradStore {
            slots: (0..n).map(|_| None).collect(),
        }
    }

    fn accum(&mut self, id: usize, len: usize) -> &mut [T] {
        self.slots[id].get_or_insert_with(|| vec![T::ZERO; len])
    }

    fn take(&mut self, id: usize) -> Option<Vec<T>> {
        self.slots.get_mut(id).and_then(Option::take)
    }

    fn put(&mut self, id: usize, g: Vec<T>) {
        self.slots[id] = Some(g);
    }

    fn get(&self, id: usize) -> Option<&[T]> {
        self.slots.get(id).and_then(|s| s.as_deref())
    }
}

/// out[m,n] += op(A) · op(B) with optional per-operand transposes.
/// `a` is physically (ra, ca); logical A' is its transpose when `ta`.
/// Transposing both operands is unsupported (never needed by the backward rules).
fn mm_acc<T: Scalar>(
    a: &[T],
    (ra, ca): (usize, usize),
    ta: bool,
    b: &[T],
    (rb, cb): (usize, usize),
    tb: bool,
    out: &mut [T],
) {
    let (m, k) = if ta { (ca, ra) } else { (ra, ca) };
    let (kb, n) = if tb { (cb, rb) } else { (rb, cb) };
    debug_assert_eq!(k, kb, "inner dims");
    debug_assert_eq!(out.len(), m * n);
    match (ta, tb) {
        (false, false) => {
            for i in 0..m {
                let arow = &a[i * ca..(i + 1) * ca];
                let orow = &mut out[i * n..(i + 1) * n];
                for (p, &av) in arow.iter().enumerate() {
                    let brow = &b[p * cb..p * cb + n];
                    for j in 0..n {
                        orow[j] += av * brow[j];
                    }
                }
            }
        }
        (false, true) => {
            // b is physically (n, k); rows of both operands are contiguous.
            for i in 0..m {
                let arow = &a[i * ca..(i + 1) * ca];
                let orow = &mut out[i * n..(i + 1) * n];
                for (j, o) in orow.iter_mut().enumerate() {
                    let brow = &b[j * cb..(j + 1) * cb];
                    let mut acc = T::ZERO;
                    for p in 0..k {
                        acc += arow[p] * brow[p];
                    }
                    *o += acc;
                }
            }
        }
        (true, false) => {
            // a is physically (k, m).
            for p in 0..k {
                let arow = &a[p * ca..(p + 1) * ca];
                let brow = &b[p * cb..p * cb + n];
                for i in 0..m {
                    let av = arow[i];
                    let orow = &mut out[i * n..(i + 1) * n];
                    for j in 0..n {
                        orow[j] += av * brow[j];
                    }
                }
            }
        }
        (true, true) => unreachable!("double-transposed matmul is not supported"),
    }
}

fn strides(shape: &[usize]) -> Vec<usize> {
    let mut s = vec![1; shape.len()];
    for i in (0..shape.len().saturating_sub(1)).rev() {
        s[i] = s[i + 1] * shape[i + 1];
    }
    s
}

/// Visits (src_flat, dst_flat) pairs for a permutation of axes:
/// dst axis o corresponds to src axis axes[o].
fn permute_visit(src_shape: &[usize], axes: &[usize], mut visit: impl FnMut(usize, usize)) {
    let rank = src_shape.len();
    let dst_shape: Vec<usize> = axes.iter().map(|&a| src_shape[a]).collect();
    let src_strides = strides(src_shape);
    let total = numel(src_shape);
    let mut dst_idx = vec![0usize; rank];
    for dst_flat in 0..total {
        let mut src_flat = 0;
        for o in 0..rank {
            src_flat += dst_idx[o] * src_strides[axes[o]];
        }
        visit(src_flat, dst_flat);
        for o in (0..rank).rev() {
            dst_idx[o] += 1;
            if dst_idx[o] < dst_shape[o] {
                break;
            }
            dst_idx[o] = 0;
        }
    }
}

fn stable_sigmoid<T: Scalar>(x: T) -> T {
    if x >= T::ZERO {
        T::ONE / (T::ONE + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::ONE + e)
    }
}

// ── tape ───────────────────────────────────────────────────────

pub struct Tape<T: Scalar> {
    nodes: Vec<Node<T>>,
    grads: GradStore<T>,
    bindings: Vec<Option<Var>>,
    bound: Vec<Pid>,
    poisoned: Option<usize>,
}

impl<T: Scalar> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Tape {
            nodes: Vec::new(),
            grads: GradStore::new(0),
            bindings: Vec::new(),
            bound: Vec::new(),
            poisoned: None,
        }
    }

    fn push(&mut self, shape: Vec<usize>, data: Vec<T>, back: Option<BackFn<T>>) -> Var {
        debug_assert_eq!(numel(&shape), data.len());
        if self.poisoned.is_none() && !data.iter().all(|v| v.is_finite()) {
            self.poisoned = Some(self.nodes.len());
        }
        self.nodes.push(Node { shape, data, back });
        Var(self.nodes.len() - 1)
    }

    /// Leaf holding a copy of `t`. Gradients flow to it but nowhere further.
    pub fn input(&mut self, t: &Tensor<T>) -> Var {
        self.push(t.shape().to_vec(), t.data().to_vec(), None)
    }

    /// Alias of [`Tape::input`] for non-trainable values (masks, positions).
    pub fn constant(&mut self, t: &Tensor<T>) -> Var {
        self.input(t)
    }

    /// Binds a parameter; repeated binds of one Pid return the same node, so
    /// tied uses accumulate a single gradient.
    pub fn param(&mut self, store: &ParamStore<T>, pid: Pid) -> Var {
        if self.bindings.len() < store.len() {
            self.bindings.resize(store.len(), None);
        }
        if let Some(v) = self.bindings[pid.0] {
            return v;
        }
        let t = store.get(pid);
        let v = self.push(t.shape().to_vec(), t.data().to_vec(), None);
        self.bindings[pid.0] = Some(v);
        self.bound.push(pid);
        v
    }

    pub fn value(&self, v: Var) -> &[T] {
        &self.nodes[v.0].data
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        &self.nodes[v.0].shape
    }

    pub fn tensor(&self, v: Var) -> Tensor<T> {
        Tensor::new(self.nodes[v.0].shape.clone(), self.nodes[v.0].data.clone())
            .expect("tape nodes hold valid tensors")
    }

    /// Scalar value of a rank-1 length-1 node.
    pub fn scalar_value(&self, v: Var) -> T {
        debug_assert_eq!(self.nodes[v.0].data.len(), 1);
        self.nodes[v.0].data[0]
    }

    /// Gradient of the last backward pass w.r.t. node `v`.
    pub fn grad(&self, v: Var) -> Option<&[T]> {
        self.grads.get(v.0)
    }

    /// First node whose value or gradient went non-finite, if any. Numeric
    /// blow-ups poison the tape instead of panicking so the caller can
    /// abort a diverged run cleanly.
    pub fn poisoned(&self) -> Option<usize> {
        self.poisoned
    }

    /// Reverse pass from a scalar root. Fills per-node gradients.
    pub fn backward(&mut self, root: Var) -> Result<()> {
        if self.nodes[root.0].data.len() != 1 {
            return Err(LabError::contract(format!(
                "backward root must be scalar, got shape {:?}",
                self.nodes[root.0].shape
            )));
        }
        let mut grads = GradStore::new(self.nodes.len());
        grads.put(root.0, vec![T::ONE]);
        for id in (0..=root.0).rev() {
            let g = match grads.take(id) {
                Some(g) => g,
                None => continue,
            };
            if self.poisoned.is_none() && !g.iter().all(|v| v.is_finite()) {
                self.poisoned = Some(id);
            }
            if let Some(back) = &self.nodes[id].back {
                back(&g, id, &self.nodes, &mut grads);
            }
            grads.put(id, g);
        }
        self.grads = grads;
        Ok(())
    }

    /// Adds this tape's parameter gradients into the store's accumulators.
    pub fn accumulate_param_grads(&self, store: &mut ParamStore<T>) {
        for &pid in &self.bound {
            let var = self.bindings[pid.0].expect("bound pid has a binding");
            if let Some(g) = self.grads.get(var.0) {
                let acc = store
                    .get_mut(pid)
                    .grad_mut()
                    .expect("parameters track gradients");
                for (a, &gv) in acc.iter_mut().zip(g) {
                    *a += gv;
                }
            }
        }
    }

    // ── elementwise and broadcast ops ──────────────────────────

    fn zip_same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<()> {
        if self.shape(a) != self.shape(b) {
            return Err(LabError::dim(op, self.shape(a), self.shape(b)));
        }
        Ok(())
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_same_shape("add", a, b)?;
        let data: Vec<T> = self.nodes[a.0]
            .data
            .iter()
            .zip(&self.nodes[b.0].data)
            .map(|(&x, &y)| x + y)
            .collect();
        let shape = self.nodes[a.0].shape.clone();
        Ok(self.push(
            shape,
            data,
            Some(Box::new(move |g, _, _, grads| {
                let ga = grads.accum(a.0, g.len());
                for (x, &gv) in ga.iter_mut().zip(g) {
                    *x += gv;
                }
                let gb = grads.accum(b.0, g.len());
                for (x, &gv) in gb.iter_mut().zip(g) {
                    *x += gv;
                }
            })),
        ))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_same_shape("sub", a, b)?;
        let data: Vec<T> = self.nodes[a.0]
            .data
            .iter()
            .zip(&self.nodes[b.0].data)
            .map(|(&x, &y)| x - y)
            .collect();
        let shape = self.nodes[a.0].shape.clone();
        Ok(self.push(
            shape,
            data,
            Some(Box::new(move |g, _, _, grads| {
                let ga = grads.accum(a.0, g.len());
                for (x, &gv) in ga.iter_mut().zip(g) {
                    *x += gv;
                }
                let gb = grads.accum(b.0, g.len());
                for (x, &gv) in gb.iter_mut().zip(g) {
                    *x -= gv;
                }
            })),
        ))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_same_shape("mul", a, b)?;
        let data: Vec<T> = self.nodes[a.0]
            .data
            .iter()
            .zip(&self.nodes[b.0].data)
            .map(|(&x, &y)| x * y)
            .collect();
        let shape = self.nodes[a.0].shape.clone();
        Ok(self.push(
            shape,
            data,
            Some(Box::new(move |g, _, nodes, grads| {
                {
                    let bdat = &nodes[b.0].data;
                    let ga = grads.accum(a.0, g.len());
                    for i in 0..g.len() {
                        ga[i] += g[i] * bdat[i];
                    }
                }
                let adat = &nodes[a.0].data;
                let gb = grads.accum(b.0, g.len());
                for i in 0..g.len() {
                    gb[i] += g[i] * adat[i];
                }
            })),
        ))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Result<Var> {
        let cs = T::from_f64(c);
        let data: Vec<T> = self.nodes[a.0].data.iter().map(|&x| x * cs).collect();
        let shape = self.nodes[a.0].shape.clone();
        Ok(self.push(
            shape,
            data,
            Some(Box::new(move |g, _, _, grads| {
                let ga = grads.accum(a.0, g.len());
                for (x, &gv) in ga.iter_mut().zip(g) {
                    *x += gv * cs;
                }
            })),
        ))
    }

    fn check_suffix(&self, op: &'static str, a: Var, b: Var) -> Result<usize> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sb.len() > sa.len() || &sa[sa.len() - sb.len()..] != sb {
            return Err(LabError::dim(op, sa, sb));
        }
        Ok(numel(sb))
    }

    /// a + b where b's shape is a suffix of a's (bias add, mask add).
    pub fn add_broadcast(&mut self, a: Var, b: Var) -> Result<Var> {
        let blen = self.check_suffix("add_broadcast", a, b)?;
        let bdat = &self.nodes[b.0].data;
        let data: Vec<T> = self.nodes[a.0]
            .data
            .iter()
            .enumerate()
            .map(|(i, &x)| x + bdat[i % blen])
            .collect();
        let shape = self.nodes[a.0].shape.clone();
        Ok(self.push(
            shape,
            data,
            Some(Box::new(move |g, _, _, grads| {
                {
                    let ga = grads.accum(a.0, g.len());
                    for (x, &gv) in ga.iter_mut().zip(g) {
                        *x += gv;
                    }
                }
                let gb = grads.accum(b.0, blen);
                for (i, &gv) in g.iter().enumerate() {
                    gb[i % blen] += gv;
                }
            })),
        ))
    }

    /// a * b where b's shape is a suffix of a's (multiplicative masks).
    pub fn mul_broadcast(&mut self, a: Var, b: Var) -> Result<Var> {
        let blen = self.check_suffix("mul_broadcast", a, b)?;
        let bdat = &self.nodes[b.0].data;
        let data: Vec<T> = self.nodes[a.0]
            .data
            .iter()
            .enumerate()
            .map(|(i, &x)| x * bdat[i % blen])
            .collect();
        let shape = self.nodes[a.0].shape.clone();
        Ok(self.push(
            shape,
            data,
            Some(Box::new(move |g, _, nodes, grads| {
                {
                    let bdat = &nodes[b.0].data;
                    let ga = grads.accum(a.0, g.len());
                    for (i, &gv) in g.iter().enumerate() {
                        ga[i] += gv * bdat[i % blen];
                    }
                }
                let adat = &nodes[a.0].data;
                let gb = grads.accum(b.0, blen);
                for (i, &gv) in g.iter().enumerate() {
                    gb[i % blen] += gv * adat[i];
                }
            })),
        ))
    }

    /// Tiles an unbatched value across a new leading batch axis.
    pub fn tile_batch(&mut self, v: Var, batch: usize) -> Result<Var> {
        if batch == 0 {
            return Err(LabError::config("tile_batch with batch 0"));
        }
        let base = self.nodes[v.0].data.clone();
        let blen = base.len();
        let mut shape = vec![batch];
        shape.extend_from_slice(&self.nodes[v.0].shape);
        let mut data = Vec::with_capacity(blen * batch);
        for _ in 0..batch {
            data.extend_from_slice(&base);
        }
        Ok(self.push(
            shape,
            data,
            Some(Box::new(move |g, _, _, grads| {
                let gv = grads.accum(v.0, blen);
                for (i, &gg) in g.iter().enumerate() {
                    gv[i % blen] += gg;
                }
            })),
        ))
    }

    // ── matmul ─────────────────────────────────────────────────

    /// Batched matrix product over the trailing two axes, with optional
    /// transposes. Leading (batch) axes must match, or one operand may be
    /// unbatched (rank 2) and is broadcast. `ta && tb` is rejected.
    pub fn matmul(&mut self, a: Var, b: Var, ta: bool, tb: bool) -> Result<Var> {
        if ta && tb {
            return Err(LabError::contract("matmul with both operands transposed"));
        }
        let ash = self.shape(a).to_vec();
        let bsh = self.shape(b).to_vec();
        if ash.len() < 2 || bsh.len() < 2 {
            return Err(LabError::dim("matmul", &ash, &bsh));
        }
        let (ra, ca) = (ash[ash.len() - 2], ash[ash.len() - 1]);
        let (rb, cb) = (bsh[bsh.len() - 2], bsh[bsh.len() - 1]);
        let (m, ka) = if ta { (ca, ra) } else { (ra, ca) };
        let (kb, n) = if tb { (cb, rb) } else { (rb, cb) };
        if ka != kb {
            return Err(LabError::dim("matmul", &ash, &bsh));
        }
        let abatch = &ash[..ash.len() - 2];
        let bbatch = &bsh[..bsh.len() - 2];
        let (batch_shape, a_batched, b_batched) = if abatch == bbatch {
            (abatch.to_vec(), true, true)
        } else if abatch.is_empty() {
            (bbatch.to_vec(), false, true)
        } else if bbatch.is_empty() {
            (abatch.to_vec(), true, false)
        } else {
            return Err(LabError::dim("matmul batch", &ash, &bsh));
        };
        let nb = numel(&batch_shape).max(1);
        let (ablk, bblk) = (ra * ca, rb * cb);
        let mut out = vec![T::ZERO; nb * m * n];
        {
            let adat = &self.nodes[a.0].data;
            let bdat = &self.nodes[b.0].data;
            for i in 0..nb {
                let ao = if a_batched { i * ablk } else { 0 };
                let bo = if b_batched { i * bblk } else { 0 };
                mm_acc(
                    &adat[ao..ao + ablk],
                    (ra, ca),
                    ta,
                    &bdat[bo..bo + bblk],
                    (rb, cb),
                    tb,
                    &mut out[i * m * n..(i + 1) * m * n],
                );
            }
        }
        let mut out_shape = batch_shape;
        out_shape.push(m);
        out_shape.push(n);
        let (alen, blen) = (self.nodes[a.0].data.len(), self.nodes[b.0].data.len());
        Ok(self.push(
            out_shape,
            out,
            Some(Box::new(move |g, _, nodes, grads| {
                let gblk = m * n;
                // dA
                {
                    let bdat = &nodes[b.0].data;
                    let ga = grads.accum(a.0, alen);
                    for i in 0..nb {
                        let gs = &g[i * gblk..(i + 1) * gblk];
                        let bo = if b_batched { i * bblk } else { 0 };
                        let ao = if a_batched { i * ablk } else { 0 };
                        let bs = &bdat[bo..bo + bblk];
                        let out = &mut ga[ao..ao + ablk];
                        if !ta {
                            // dA = dC · B'ᵀ
                            mm_acc(gs, (m, n), false, bs, (rb, cb), !tb, out);
                        } else {
                            // A physically (k, m): dA = B' · dCᵀ
                            mm_acc(bs, (rb, cb), tb, gs, (m, n), true, out);
                        }
                    }
                }
                // dB
                {
                    let adat = &nodes[a.0].data;
                    let gb = grads.accum(b.0, blen);
                    for i in 0..nb {
                        let gs = &g[i * gblk..(i + 1) * gblk];
                        let ao = if a_batched { i * ablk } else { 0 };
                        let bo = if b_batched { i * bblk } else { 0 };
                        let as_ = &adat[ao..ao + ablk];
                        let out = &mut gb[bo..bo + bblk];
                        if !tb {
                            // dB = A'ᵀ · dC
                            mm_acc(as_, (ra, ca), !ta, gs, (m, n), false, out);
                        } else {
                            // B physically (n, k): dB = dCᵀ · A'
                            mm_acc(gs, (m, n), true, as_, (ra, ca), ta, out);
                        }
                    }
                }
            })),
        ))
    }

    // ── nonlinearities ─────────────────────────────────────────

    /// Softmax over the trailing axis, stabilized by max subtraction.
    pub fn row_softmax(&mut self, a: Var) -> Result<Var> {
        let shape = self.nodes[a.0].shape.clone();
        let n = *shape.last().ok_or_else(|| LabError::contract("softmax on rank-0"))?;
        let mut data = self.nodes[a.0].data.clone();
        for row in data.chunks_mut(n) {
            let mut mx = row[0];
            for &v in row.iter() {
                mx = mx.maxs(v);
            }
            let mut sum = T::ZERO;
            for v in row.iter_mut() {
                *v = (*v - mx).exp();
                sum += *v;
            }
            for v in row.iter_mut() {
                *v /= sum;
            }
        }
        Ok(self.push(
            shape,
            data,
            Some(Box::new(move |g, own, nodes, grads| {
                let y = &nodes[own].data;
                let ga = grads.accum(a.0, y.len());
                for r in 0..y.len() / n {
                    let (ys, gs) = (&y[r * n..(r + 1) * n], &g[r * n..(r + 1) * n]);
                    let mut dot = T::ZERO;
                    for j in 0..n {
                        dot += ys[j] * gs[j];
                    }
                    let out = &mut ga[r * n..(r + 1) * n];
                    for j in 0..n {
                        out[j] += ys[j] * (gs[j] - dot);
                    }
                }
            })),
        ))
    }

    /// Entrywise activation. `Linear` is the identity and adds no node.
    pub fn activation(&mut self, a: Var, kind: ElemKind) -> Result<Var> {
        if kind == ElemKind::Linear {
            return Ok(a);
        }
        let shape = self.nodes[a.0].shape.clone();
        let data: Vec<T> = self.nodes[a.0]
            .data
            .iter()
            .map(|&x| match kind {
                ElemKind::Relu => x.maxs(T::ZERO),
                ElemKind::Sigmoid => stable_sigmoid(x),
                ElemKind::Tanh => x.tanh(),
                ElemKind::Linear => unreachable!(),
            })
            .collect();
        Ok(self.push(
            shape,
            data,
            Some(Box::new(move |g, own, nodes, grads| {
                let y = &nodes[own].data;
                let x = &nodes[a.0].data;
                let ga = grads.accum(a.0, y.len());
                for i in 0..y.len() {
                    let d = match kind {
                        ElemKind::Relu => {
                            if x[i] > T::ZERO {
                                T::ONE
                            } else {
                                T::ZERO
                            }
                        }
                        ElemKind::Sigmoid => y[i] * (T::ONE - y[i]),
                        ElemKind::Tanh => T::ONE - y[i] * y[i],
                        ElemKind::Linear => unreachable!(),
                    };
                    ga[i] += g[i] * d;
                }
            })),
        ))
    }

    /// Layer normalization over the trailing axis with biased variance,
    /// then entrywise affine by `gain` and `bias` (both shape [d]).
    pub fn layer_norm(&mut self, a: Var, gain: Var, bias: Var, eps: f64) -> Result<Var> {
        let shape = self.nodes[a.0].shape.clone();
        let d = *shape
            .last()
            .ok_or_else(|| LabError::contract("layer_norm on rank-0"))?;
        if self.shape(gain) != [d] {
            return Err(LabError::dim("layer_norm gain", &shape, self.shape(gain)));
        }
        if self.shape(bias) != [d] {
            return Err(LabError::dim("layer_norm bias", &shape, self.shape(bias)));
        }
        let rows = self.nodes[a.0].data.len() / d;
        let epss = T::from_f64(eps);
        let dd = T::from_f64(d as f64);
        let mut mean = vec![T::ZERO; rows];
        let mut inv = vec![T::ZERO; rows];
        let mut data = vec![T::ZERO; rows * d];
        {
            let x = &self.nodes[a.0].data;
            let gdat = &self.nodes[gain.0].data;
            let bdat = &self.nodes[bias.0].data;
            for r in 0..rows {
                let xr = &x[r * d..(r + 1) * d];
                let mut mu = T::ZERO;
                for &v in xr {
                    mu += v;
                }
                mu /= dd;
                let mut var = T::ZERO;
                for &v in xr {
                    let c = v - mu;
                    var += c * c;
                }
                var /= dd;
                let iv = T::ONE / (var + epss).sqrt();
                mean[r] = mu;
                inv[r] = iv;
                let out = &mut data[r * d..(r + 1) * d];
                for j in 0..d {
                    out[j] = (xr[j] - mu) * iv * gdat[j] + bdat[j];
                }
            }
        }
        Ok(self.push(
            shape,
            data,
            Some(Box::new(move |g, _, nodes, grads| {
                let x = &nodes[a.0].data;
                let gdat = &nodes[gain.0].data;
                // dgain, dbias
                {
                    let ggain = grads.accum(gain.0, d);
                    for r in 0..rows {
                        let xr = &x[r * d..(r + 1) * d];
                        let gr = &g[r * d..(r + 1) * d];
                        for j in 0..d {
                            ggain[j] += gr[j] * (xr[j] - mean[r]) * inv[r];
                        }
                    }
                }
                {
                    let gbias = grads.accum(bias.0, d);
                    for r in 0..rows {
                        let gr = &g[r * d..(r + 1) * d];
                        for j in 0..d {
                            gbias[j] += gr[j];
                        }
                    }
                }
                let ga = grads.accum(a.0, rows * d);
                for r in 0..rows {
                    let xr = &x[r * d..(r + 1) * d];
                    let gr = &g[r * d..(r + 1) * d];
                    let (mu, iv) = (mean[r], inv[r]);
                    let mut s1 = T::ZERO;
                    let mut s2 = T::ZERO;
                    for j in 0..d {
                        let xhat = (xr[j] - mu) * iv;
                        let gh = gr[j] * gdat[j];
                        s1 += gh;
                        s2 += gh * xhat;
                    }
                    let out = &mut ga[r * d..(r + 1) * d];
                    for j in 0..d {
                        let xhat = (xr[j] - mu) * iv;
                        let gh = gr[j] * gdat[j];
                        out[j] += iv * (gh - s1 / dd - xhat * s2 / dd);
                    }
                }
            })),
        ))
    }

    // ── shape ops ──────────────────────────────────────────────

    pub fn reshape(&mut self, a: Var, new_shape: Vec<usize>) -> Result<Var> {
        if numel(&new_shape) != self.nodes[a.0].data.len() {
            return Err(LabError::dim("reshape", self.shape(a), &new_shape));
        }
        let data = self.nodes[a.0].data.clone();
        Ok(self.push(
            new_shape,
            data,
            Some(Box::new(move |g, _, _, grads| {
                let ga = grads.accum(a.0, g.len());
                for (x, &gv) in ga.iter_mut().zip(g) {
                    *x += gv;
                }
            })),
        ))
    }

    /// General axis permutation: output axis o takes input axis axes[o].
    pub fn permute(&mut self, a: Var, axes: &[usize]) -> Result<Var> {
        let src_shape = self.nodes[a.0].shape.clone();
        let rank = src_shape.len();
        let mut seen = vec![false; rank];
        if axes.len() != rank || axes.iter().any(|&x| x >= rank || std::mem::replace(&mut seen[x], true)) {
            return Err(LabError::contract(format!(
                "permute axes {axes:?} invalid for rank {rank}"
            )));
        }
        let dst_shape: Vec<usize> = axes.iter().map(|&x| src_shape[x]).collect();
        let mut data = vec![T::ZERO; self.nodes[a.0].data.len()];
        {
            let src = &self.nodes[a.0].data;
            permute_visit(&src_shape, axes, |s, t| data[t] = src[s]);
        }
        let axes_owned = axes.to_vec();
        Ok(self.push(
            dst_shape,
            data,
            Some(Box::new(move |g, _, _, grads| {
                let ga = grads.accum(a.0, g.len());
                permute_visit(&src_shape, &axes_owned, |s, t| ga[s] += g[t]);
            })),
        ))
    }

    /// Rows [start, start+len) of a rank-2 tensor.
    pub fn slice_rows(&mut self, a: Var, start: usize, len: usize) -> Result<Var> {
        let sh = self.shape(a).to_vec();
        if sh.len() != 2 {
            return Err(LabError::contract(format!(
                "slice_rows requires rank 2, got {sh:?}"
            )));
        }
        let (rows, d) = (sh[0], sh[1]);
        if start + len > rows {
            return Err(LabError::capacity(format!(
                "slice_rows {start}..{} out of {rows} rows",
                start + len
            )));
        }
        let data = self.nodes[a.0].data[start * d..(start + len) * d].to_vec();
        let total = rows * d;
        Ok(self.push(
            vec![len, d],
            data,
            Some(Box::new(move |g, _, _, grads| {
                let ga = grads.accum(a.0, total);
                for (i, &gv) in g.iter().enumerate() {
                    ga[start * d + i] += gv;
                }
            })),
        ))
    }

    /// Row gather from a [vocab, d] table; output is [ids.len(), d].
    pub fn embedding(&mut self, table: Var, ids: &[usize]) -> Result<Var> {
        let sh = self.shape(table).to_vec();
        if sh.len() != 2 {
            return Err(LabError::contract(format!(
                "embedding table must be rank 2, got {sh:?}"
            )));
        }
        let (vocab, d) = (sh[0], sh[1]);
        if let Some(&bad) = ids.iter().find(|&&i| i >= vocab) {
            return Err(LabError::contract(format!(
                "token id {bad} out of vocabulary {vocab}"
            )));
        }
        let mut data = Vec::with_capacity(ids.len() * d);
        {
            let tdat = &self.nodes[table.0].data;
            for &id in ids {
                data.extend_from_slice(&tdat[id * d..(id + 1) * d]);
            }
        }
        let ids_owned = ids.to_vec();
        let tlen = vocab * d;
        Ok(self.push(
            vec![ids.len(), d],
            data,
            Some(Box::new(move |g, _, _, grads| {
                let gt = grads.accum(table.0, tlen);
                for (r, &id) in ids_owned.iter().enumerate() {
                    for j in 0..d {
                        gt[id * d + j] += g[r * d + j];
                    }
                }
            })),
        ))
    }

    /// Position-relative weighted sum: given per-head scores [B, h, m, m] and
    /// per-head offset values [h, 2m-1, dv] (row m-1+delta holds offset delta),
    /// out[b, hh, i, :] = sum_j scores[b, hh, i, j] * values[hh, j-i+m-1, :].
    pub fn offset_weighted_sum(&mut self, scores: Var, values: Var) -> Result<Var> {
        let ssh = self.shape(scores).to_vec();
        let vsh = self.shape(values).to_vec();
        if ssh.len() != 4 || ssh[2] != ssh[3] {
            return Err(LabError::contract(format!(
                "offset_weighted_sum scores must be [B, h, m, m], got {ssh:?}"
            )));
        }
        let (bsz, h, m) = (ssh[0], ssh[1], ssh[2]);
        if vsh.len() != 3 || vsh[0] != h || vsh[1] != 2 * m - 1 {
            return Err(LabError::capacity(format!(
                "offset values {vsh:?} do not cover [h={h}, {}..] offsets",
                2 * m - 1
            )));
        }
        let dv = vsh[2];
        let mut data = vec![T::ZERO; bsz * h * m * dv];
        {
            let sdat = &self.nodes[scores.0].data;
            let vdat = &self.nodes[values.0].data;
            for b in 0..bsz {
                for hh in 0..h {
                    for i in 0..m {
                        let out =
                            &mut data[((b * h + hh) * m + i) * dv..((b * h + hh) * m + i + 1) * dv];
                        for j in 0..m {
                            let w = sdat[((b * h + hh) * m + i) * m + j];
                            let vrow = &vdat[(hh * (2 * m - 1) + (j + m - 1 - i)) * dv..];
                            for t in 0..dv {
                                out[t] += w * vrow[t];
                            }
                        }
                    }
                }
            }
        }
        let (slen, vlen) = (
            self.nodes[scores.0].data.len(),
            self.nodes[values.0].data.len(),
        );
        Ok(self.push(
            vec![bsz, h, m, dv],
            data,
            Some(Box::new(move |g, _, nodes, grads| {
                {
                    let vdat = &nodes[values.0].data;
                    let gs = grads.accum(scores.0, slen);
                    for b in 0..bsz {
                        for hh in 0..h {
                            for i in 0..m {
                                let go = &g[((b * h + hh) * m + i) * dv
                                    ..((b * h + hh) * m + i + 1) * dv];
                                for j in 0..m {
                                    let vrow =
                                        &vdat[(hh * (2 * m - 1) + (j + m - 1 - i)) * dv..];
                                    let mut acc = T::ZERO;
                                    for t in 0..dv {
                                        acc += go[t] * vrow[t];
                                    }
                                    gs[((b * h + hh) * m + i) * m + j] += acc;
                                }
                            }
                        }
                    }
                }
                let sdat = &nodes[scores.0].data;
                let gv = grads.accum(values.0, vlen);
                for b in 0..bsz {
                    for hh in 0..h {
                        for i in 0..m {
                            let go =
                                &g[((b * h + hh) * m + i) * dv..((b * h + hh) * m + i + 1) * dv];
                            for j in 0..m {
                                let w = sdat[((b * h + hh) * m + i) * m + j];
                                let vrow = &mut gv
                                    [(hh * (2 * m - 1) + (j + m - 1 - i)) * dv..][..dv];
                                for t in 0..dv {
                                    vrow[t] += w * go[t];
                                }
                            }
                        }
                    }
                }
            })),
        ))
    }

    // ── reductions and losses ──────────────────────────────────

    pub fn sum_all(&mut self, a: Var) -> Result<Var> {
        let mut s = T::ZERO;
        for &v in &self.nodes[a.0].data {
            s += v;
        }
        let alen = self.nodes[a.0].data.len();
        Ok(self.push(
            vec![1],
            vec![s],
            Some(Box::new(move |g, _, _, grads| {
                let ga = grads.accum(a.0, alen);
                for x in ga.iter_mut() {
                    *x += g[0];
                }
            })),
        ))
    }

    /// Fixed-weight contraction to a scalar; useful as a generic test loss.
    pub fn dot_const(&mut self, a: Var, w: &[T]) -> Result<Var> {
        if w.len() != self.nodes[a.0].data.len() {
            return Err(LabError::dim("dot_const", self.shape(a), &[w.len()]));
        }
        let mut s = T::ZERO;
        for (&x, &ww) in self.nodes[a.0].data.iter().zip(w) {
            s += x * ww;
        }
        let w_owned = w.to_vec();
        Ok(self.push(
            vec![1],
            vec![s],
            Some(Box::new(move |g, _, _, grads| {
                let ga = grads.accum(a.0, w_owned.len());
                for (x, &ww) in ga.iter_mut().zip(&w_owned) {
                    *x += g[0] * ww;
                }
            })),
        ))
    }

    /// Mean negative log-likelihood of `targets` under row-wise softmax of
    /// rank-2 logits [N, V]. Rows whose target equals `ignore` contribute
    /// neither loss nor gradient.
    pub fn cross_entropy(
        &mut self,
        logits: Var,
        targets: &[usize],
        ignore: Option<usize>,
    ) -> Result<Var> {
        let sh = self.shape(logits).to_vec();
        if sh.len() != 2 {
            return Err(LabError::contract(format!(
                "cross_entropy expects rank-2 logits, got {sh:?}"
            )));
        }
        let (n, v) = (sh[0], sh[1]);
        if targets.len() != n {
            return Err(LabError::dim("cross_entropy targets", &sh, &[targets.len()]));
        }
        let mut count = 0usize;
        for &t in targets {
            if Some(t) == ignore {
                continue;
            }
            if t >= v {
                return Err(LabError::contract(format!(
                    "target {t} out of vocabulary {v}"
                )));
            }
            count += 1;
        }
        if count == 0 {
            return Err(LabError::contract("all positions ignored in cross_entropy"));
        }
        let mut loss = T::ZERO;
        {
            let x = &self.nodes[logits.0].data;
            for (r, &t) in targets.iter().enumerate() {
                if Some(t) == ignore {
                    continue;
                }
                let row = &x[r * v..(r + 1) * v];
                let mut mx = row[0];
                for &val in row {
                    mx = mx.maxs(val);
                }
                let mut sum = T::ZERO;
                for &val in row {
                    sum += (val - mx).exp();
                }
                loss += mx + sum.ln() - row[t];
            }
        }
        loss /= T::from_f64(count as f64);
        let targets_owned = targets.to_vec();
        Ok(self.push(
            vec![1],
            vec![loss],
            Some(Box::new(move |g, _, nodes, grads| {
                let x = &nodes[logits.0].data;
                let ga = grads.accum(logits.0, n * v);
                let scale = g[0] / T::from_f64(count as f64);
                for (r, &t) in targets_owned.iter().enumerate() {
                    if Some(t) == ignore {
                        continue;
                    }
                    let row = &x[r * v..(r + 1) * v];
                    let mut mx = row[0];
                    for &val in row {
                        mx = mx.maxs(val);
                    }
                    let mut sum = T::ZERO;
                    for &val in row {
                        sum += (val - mx).exp();
                    }
                    let out = &mut ga[r * v..(r + 1) * v];
                    for j in 0..v {
                        let p = (row[j] - mx).exp() / sum;
                        let ind = if j == t { T::ONE } else { T::ZERO };
                        out[j] += scale * (p - ind);
                    }
                }
            })),
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t2(shape: &[usize], data: &[f64]) -> Tensor<f64> {
        Tensor::new(shape.to_vec(), data.to_vec()).unwrap()
    }

    #[test]
    fn matmul_identity_and_orthogonal() {
        let mut tape = Tape::<f64>::new();
        let i2 = tape.input(&t2(&[2, 2], &[1.0, 0.0, 0.0, 1.0]));
        let m = tape.input(&t2(&[2, 2], &[1.0, 2.0, 3.0, 4.0]));
        let p = tape.matmul(i2, m, false, false).unwrap();
        assert_eq!(tape.value(p), &[1.0, 2.0, 3.0, 4.0]);

        let a = tape.input(&t2(&[1, 2], &[1.0, 0.0]));
        let b = tape.input(&t2(&[2, 1], &[0.0, 5.0]));
        let q = tape.matmul(a, b, false, false).unwrap();
        assert_eq!(tape.value(q), &[0.0]);
    }

    #[test]
    fn matmul_matches_triple_loop_oracle() {
        let mut rng = crate::engine::rng::Rng::new(12);
        let a = Tensor::<f64>::rand_normal(&mut rng, &[3, 4], 1.0);
        let b = Tensor::<f64>::rand_normal(&mut rng, &[4, 2], 1.0);
        let mut tape = Tape::new();
        let (va, vb) = (tape.input(&a), tape.input(&b));
        let c = tape.matmul(va, vb, false, false).unwrap();
        for i in 0..3 {
            for j in 0..2 {
                let mut acc = 0.0;
                for k in 0..4 {
                    acc += a.at(&[i, k]) * b.at(&[k, j]);
                }
                assert!((tape.value(c)[i * 2 + j] - acc).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn matmul_shape_error_names_both_shapes() {
        let mut tape = Tape::<f32>::new();
        let a = tape.input(&Tensor::zeros(&[2, 3]));
        let b = tape.input(&Tensor::zeros(&[4, 2]));
        let err = tape.matmul(a, b, false, false).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("[2, 3]") && msg.contains("[4, 2]"), "{msg}");
    }

    #[test]
    fn matmul_transpose_variants_agree_with_explicit_transpose() {
        let mut rng = crate::engine::rng::Rng::new(5);
        let a = Tensor::<f64>::rand_normal(&mut rng, &[4, 3], 1.0);
        let b = Tensor::<f64>::rand_normal(&mut rng, &[5, 3], 1.0);
        // a · bᵀ
        let mut tape = Tape::new();
        let (va, vb) = (tape.input(&a), tape.input(&b));
        let c = tape.matmul(va, vb, false, true).unwrap();
        for i in 0..4 {
            for j in 0..5 {
                let mut acc = 0.0;
                for k in 0..3 {
                    acc += a.at(&[i, k]) * b.at(&[j, k]);
                }
                assert!((tape.value(c)[i * 5 + j] - acc).abs() < 1e-9);
            }
        }
        // aᵀ · a2 with a [4,3] read as (3,4)ᵀ
        let a2 = Tensor::<f64>::rand_normal(&mut rng, &[4, 6], 1.0);
        let mut tape = Tape::new();
        let (va, va2) = (tape.input(&a), tape.input(&a2));
        let c = tape.matmul(va, va2, true, false).unwrap();
        assert_eq!(tape.shape(c), &[3, 6]);
        for i in 0..3 {
            for j in 0..6 {
                let mut acc = 0.0;
                for k in 0..4 {
                    acc += a.at(&[k, i]) * a2.at(&[k, j]);
                }
                assert!((tape.value(c)[i * 6 + j] - acc).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn batched_matmul_broadcasts_unbatched_operand() {
        let mut rng = crate::engine::rng::Rng::new(9);
        let x = Tensor::<f64>::rand_normal(&mut rng, &[2, 3, 4], 1.0);
        let w = Tensor::<f64>::rand_normal(&mut rng, &[4, 5], 1.0);
        let mut tape = Tape::new();
        let (vx, vw) = (tape.input(&x), tape.input(&w));
        let y = tape.matmul(vx, vw, false, false).unwrap();
        assert_eq!(tape.shape(y), &[2, 3, 5]);
        for b in 0..2 {
            for i in 0..3 {
                for j in 0..5 {
                    let mut acc = 0.0;
                    for k in 0..4 {
                        acc += x.at(&[b, i, k]) * w.at(&[k, j]);
                    }
                    assert!((tape.value(y)[(b * 3 + i) * 5 + j] - acc).abs() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn softmax_rows_sum_to_one_and_handle_large_scores() {
        let mut tape = Tape::<f32>::new();
        let a = tape.input(&Tensor::new(vec![2, 2], vec![0.0, 0.0, 1000.0, 0.0]).unwrap());
        let s = tape.row_softmax(a).unwrap();
        let v = tape.value(s);
        assert!((v[0] - 0.5).abs() < 1e-6 && (v[1] - 0.5).abs() < 1e-6);
        assert!((v[2] - 1.0).abs() < 1e-6 && v[3] >= 0.0 && v[3] < 1e-6);
        assert!(v.iter().all(|x| x.is_finite()));
    }

    #[test]
    fn activations_match_reference_points() {
        let mut tape = Tape::<f64>::new();
        let a = tape.input(&t2(&[3], &[-1.0, 0.0, 2.0]));
        let r = tape.activation(a, ElemKind::Relu).unwrap();
        assert_eq!(tape.value(r), &[0.0, 0.0, 2.0]);
        let s = tape.activation(a, ElemKind::Sigmoid).unwrap();
        assert!((tape.value(s)[1] - 0.5).abs() < 1e-12);
        let l = tape.activation(a, ElemKind::Linear).unwrap();
        assert_eq!(l, a, "linear is the identity");
    }

    #[test]
    fn layer_norm_examples() {
        let mut tape = Tape::<f64>::new();
        let gain = tape.input(&t2(&[2], &[1.0, 1.0]));
        let bias = tape.input(&t2(&[2], &[0.0, 0.0]));
        let c = tape.input(&t2(&[1, 2], &[3.0, 3.0]));
        let y = tape.layer_norm(c, gain, bias, 1e-5).unwrap();
        assert!(tape.value(y).iter().all(|v| v.abs() < 1e-9));
        let x = tape.input(&t2(&[1, 2], &[1.0, -1.0]));
        let y = tape.layer_norm(x, gain, bias, 1e-5).unwrap();
        assert!((tape.value(y)[0] - 1.0).abs() < 1e-4);
        assert!((tape.value(y)[1] + 1.0).abs() < 1e-4);
    }

    #[test]
    fn permute_round_trip() {
        let mut rng = crate::engine::rng::Rng::new(2);
        let x = Tensor::<f64>::rand_normal(&mut rng, &[2, 3, 4, 5], 1.0);
        let mut tape = Tape::new();
        let v = tape.input(&x);
        let p = tape.permute(v, &[0, 2, 1, 3]).unwrap();
        assert_eq!(tape.shape(p), &[2, 4, 3, 5]);
        let back = tape.permute(p, &[0, 2, 1, 3]).unwrap();
        assert_eq!(tape.value(back), x.data());
    }

    #[test]
    fn embedding_gathers_rows() {
        let mut tape = Tape::<f64>::new();
        let table = tape.input(&t2(&[3, 2], &[0.0, 1.0, 2.0, 3.0, 4.0, 5.0]));
        let e = tape.embedding(table, &[2, 0, 2]).unwrap();
        assert_eq!(tape.value(e), &[4.0, 5.0, 0.0, 1.0, 4.0, 5.0]);
        assert!(tape.embedding(table, &[3]).is_err());
    }

    #[test]
    fn cross_entropy_uniform_logits_is_log_vocab() {
        let mut tape = Tape::<f64>::new();
        let logits = tape.input(&Tensor::zeros(&[4, 10]));
        let l = tape.cross_entropy(logits, &[0, 3, 9, 5], None).unwrap();
        assert!((tape.scalar_value(l) - (10.0f64).ln()).abs() < 1e-9);
    }

    #[test]
    fn cross_entropy_ignores_masked_rows() {
        let mut tape = Tape::<f64>::new();
        let x = Tensor::new(vec![2, 3], vec![5.0, 0.0, 0.0, 0.0, 5.0, 0.0]).unwrap();
        let logits = tape.input(&x);
        let l = tape.cross_entropy(logits, &[0, 99], Some(99)).unwrap();
        let expected = {
            let row: Vec<f64> = vec![5.0, 0.0, 0.0];
            let sum: f64 = row.iter().map(|v| (v - 5.0).exp()).sum();
            5.0 + sum.ln() - 5.0
        };
        assert!((tape.scalar_value(l) - expected).abs() < 1e-9);
        tape.backward(l).unwrap();
        let g = tape.grad(logits).unwrap();
        assert!(g[3..].iter().all(|&v| v == 0.0), "masked row must get zero gradient");
        assert!(tape.cross_entropy(logits, &[7, 7], Some(7)).is_err());
    }

    #[test]
    fn backward_accumulates_through_shared_input() {
        // y = sum(x * x) → dy/dx = 2x
        let mut tape = Tape::<f64>::new();
        let x = tape.input(&t2(&[3], &[1.0, 2.0, 3.0]));
        let sq = tape.mul(x, x).unwrap();
        let y = tape.sum_all(sq).unwrap();
        tape.backward(y).unwrap();
        assert_eq!(tape.grad(x).unwrap(), &[2.0, 4.0, 6.0]);
    }

    #[test]
    fn backward_rejects_non_scalar_root() {
        let mut tape = Tape::<f64>::new();
        let x = tape.input(&t2(&[2], &[1.0, 2.0]));
        assert!(tape.backward(x).is_err());
    }

    #[test]
    fn param_binding_is_cached_and_grads_accumulate_once() {
        let mut store = ParamStore::<f64>::new();
        let w = store
            .add("w", Tensor::new(vec![2], vec![1.5, -0.5]).unwrap())
            .unwrap();
        let mut tape = Tape::new();
        let v1 = tape.param(&store, w);
        let v2 = tape.param(&store, w);
        assert_eq!(v1, v2);
        // loss = sum(w) + sum(w*w): dw = 1 + 2w
        let s1 = tape.sum_all(v1).unwrap();
        let sq = tape.mul(v1, v2).unwrap();
        let s2 = tape.sum_all(sq).unwrap();
        let loss = tape.add(s1, s2).unwrap();
        tape.backward(loss).unwrap();
        store.zero_grads();
        tape.accumulate_param_grads(&mut store);
        let g = store.get(w).grad().unwrap();
        assert!((g[0] - 4.0).abs() < 1e-12);
        assert!((g[1] - 0.0).abs() < 1e-12);
    }

    #[test]
    fn tile_batch_sums_gradient_over_batch() {
        let mut tape = Tape::<f64>::new();
        let x = tape.input(&t2(&[2], &[1.0, 2.0]));
        let t = tape.tile_batch(x, 3).unwrap();
        assert_eq!(tape.shape(t), &[3, 2]);
        let s = tape.sum_all(t).unwrap();
        tape.backward(s).unwrap();
        assert_eq!(tape.grad(x).unwrap(), &[3.0, 3.0]);
    }

    #[test]
    fn offset_weighted_sum_matches_loop() {
        let mut rng = crate::engine::rng::Rng::new(7);
        let scores = Tensor::<f64>::rand_normal(&mut rng, &[2, 2, 3, 3], 1.0);
        let values = Tensor::<f64>::rand_normal(&mut rng, &[2, 5, 4], 1.0);
        let mut tape = Tape::new();
        let (vs, vv) = (tape.input(&scores), tape.input(&values));
        let out = tape.offset_weighted_sum(vs, vv).unwrap();
        for b in 0..2 {
            for h in 0..2 {
                for i in 0..3 {
                    for t in 0..4 {
                        let mut acc = 0.0;
                        for j in 0..3 {
                            acc += scores.at(&[b, h, i, j]) * values.at(&[h, j + 2 - i, t]);
                        }
                        let got = tape.value(out)[((b * 2 + h) * 3 + i) * 4 + t];
                        assert!((got - acc).abs() < 1e-9);
                    }
                }
            }
        }
    }

    #[test]
    fn determinism_two_identical_passes_bit_equal() {
        let run = || {
            let mut rng = crate::engine::rng::Rng::new(31);
            let x = Tensor::<f32>::rand_normal(&mut rng, &[4, 6], 1.0);
            let w = Tensor::<f32>::rand_normal(&mut rng, &[6, 3], 0.5);
            let mut tape = Tape::new();
            let (vx, vw) = (tape.input(&x), tape.input(&w));
            let h = tape.matmul(vx, vw, false, false).unwrap();
            let s = tape.row_softmax(h).unwrap();
            let l = tape.sum_all(s).unwrap();
            tape.backward(l).unwrap();
            (tape.value(s).to_vec(), tape.grad(vx).unwrap().to_vec())
        };
        let (v1, g1) = run();
        let (v2, g2) = run();
        assert_eq!(v1, v2);
        assert_eq!(g1, g2);
    }
}
