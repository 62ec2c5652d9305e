//! Reverse-mode automatic differentiation over dense `f64` tensors.
//!
//! The engine is a define-by-run tape: every operation executes eagerly and,
//! when recording is enabled and an input requires gradients, pushes a record
//! with a backward rule. [`Graph::backward`] consumes the tape once, in
//! reverse order. Graphs are single-use; training rebuilds one per step.
//!
//! Complex tensors are represented as paired real tensors (`re`, `im`);
//! complex products are composed from real operations, so no separate
//! complex calculus is needed.

use crate::error::{Error, Result};

/// Handle to a tensor stored in a [`Graph`].
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub struct TensorId(usize);

/// A complex tensor as a pair of equally-shaped real tensors.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub struct ComplexPair {
    pub re: TensorId,
    pub im: TensorId,
}

struct Value {
    data: Vec<f64>,
    shape: Vec<usize>,
    requires_grad: bool,
}

/// Value and gradient access handed to backward rules.
///
/// `val` borrows are tied to the graph's lifetime rather than the context,
/// so a rule may hold input values while mutating gradient buffers.
pub(crate) struct GradCtx<'a> {
    vals: &'a [Value],
    grads: &'a mut [Option<Vec<f64>>],
}

impl<'a> GradCtx<'a> {
    pub(crate) fn val(&self, t: TensorId) -> &'a [f64] {
        &self.vals[t.0].data
    }

    /// Gradient accumulator for `t`, zero-initialised on first access.
    /// Returns `None` for tensors that do not require gradients.
    pub(crate) fn grad_mut(&mut self, t: TensorId) -> Option<&mut [f64]> {
        let v = &self.vals[t.0];
        if !v.requires_grad {
            return None;
        }
        let len = v.data.len();
        Some(self.grads[t.0].get_or_insert_with(|| vec![0.0; len]))
    }
}

/// Backward rule for one recorded operation.
///
/// `out_grads` holds the accumulated gradients of the operation's outputs,
/// aligned with the record's output list; entries are `None` when nothing
/// downstream contributed.
pub(crate) trait BackwardOp {
    fn backward(&self, out_grads: &[Option<Vec<f64>>], ctx: &mut GradCtx);
}

struct Record {
    outputs: Vec<TensorId>,
    op: Box<dyn BackwardOp>,
}

/// A single-use computation tape.
pub struct Graph {
    vals: Vec<Value>,
    grads: Vec<Option<Vec<f64>>>,
    records: Vec<Record>,
    recording: bool,
    consumed: bool,
}

impl Graph {
    /// A graph that records backward rules.
    pub fn new() -> Self {
        Graph {
            vals: Vec::new(),
            grads: Vec::new(),
            records: Vec::new(),
            recording: true,
            consumed: false,
        }
    }

    /// A graph that only computes forward values; nothing is recorded.
    pub fn inference() -> Self {
        Graph {
            recording: false,
            ..Graph::new()
        }
    }

    pub fn is_recording(&self) -> bool {
        self.recording
    }

    fn alloc(&mut self, data: Vec<f64>, shape: Vec<usize>, requires_grad: bool) -> TensorId {
        debug_assert_eq!(data.len(), shape.iter().product::<usize>());
        let id = TensorId(self.vals.len());
        self.vals.push(Value {
            data,
            shape,
            requires_grad: requires_grad && self.recording,
        });
        self.grads.push(None);
        id
    }

    pub(crate) fn push_record(&mut self, outputs: Vec<TensorId>, op: Box<dyn BackwardOp>) {
        if self.recording {
            self.records.push(Record { outputs, op });
        }
    }

    /// True when at least one input requires gradients and recording is on.
    pub(crate) fn needs_grad(&self, inputs: &[TensorId]) -> bool {
        self.recording && inputs.iter().any(|t| self.vals[t.0].requires_grad)
    }

    /// Insert a leaf tensor.
    pub fn tensor(&mut self, data: Vec<f64>, shape: &[usize], requires_grad: bool) -> Result<TensorId> {
        if data.len() != shape.iter().product::<usize>() {
            return Err(Error::ShapeMismatch(format!(
                "data length {} does not match shape {:?}",
                data.len(),
                shape
            )));
        }
        Ok(self.alloc(data, shape.to_vec(), requires_grad))
    }

    /// Leaf tensor that participates in differentiation.
    pub fn param(&mut self, data: Vec<f64>, shape: &[usize]) -> Result<TensorId> {
        self.tensor(data, shape, true)
    }

    /// Leaf tensor excluded from differentiation.
    pub fn constant(&mut self, data: Vec<f64>, shape: &[usize]) -> Result<TensorId> {
        self.tensor(data, shape, false)
    }

    pub(crate) fn output(&mut self, data: Vec<f64>, shape: Vec<usize>, requires_grad: bool) -> TensorId {
        self.alloc(data, shape, requires_grad)
    }

    pub fn data(&self, t: TensorId) -> &[f64] {
        &self.vals[t.0].data
    }

    pub fn shape(&self, t: TensorId) -> &[usize] {
        &self.vals[t.0].shape
    }

    pub fn len(&self, t: TensorId) -> usize {
        self.vals[t.0].data.len()
    }

    pub fn requires_grad(&self, t: TensorId) -> bool {
        self.vals[t.0].requires_grad
    }

    /// Accumulated gradient of `t`, available after [`Graph::backward`].
    ///
    /// Gradients of intermediate tensors are released as the tape unwinds;
    /// leaf gradients persist.
    pub fn grad(&self, t: TensorId) -> Option<&[f64]> {
        self.grads[t.0].as_deref()
    }

    /// Run reverse-mode differentiation from a scalar output.
    ///
    /// Consumes the tape: a second call is an error.
    pub fn backward(&mut self, loss: TensorId) -> Result<()> {
        if self.consumed {
            return Err(Error::InvalidArgument(
                "backward called twice on the same graph".into(),
            ));
        }
        if self.len(loss) != 1 {
            return Err(Error::ShapeMismatch(format!(
                "backward requires a scalar loss, got shape {:?}",
                self.shape(loss)
            )));
        }
        self.consumed = true;
        self.grads[loss.0] = Some(vec![1.0]);
        let records = std::mem::take(&mut self.records);
        for rec in records.iter().rev() {
            let out_grads: Vec<Option<Vec<f64>>> =
                rec.outputs.iter().map(|t| self.grads[t.0].take()).collect();
            if out_grads.iter().all(Option::is_none) {
                continue;
            }
            let mut ctx = GradCtx {
                vals: &self.vals,
                grads: &mut self.grads,
            };
            rec.op.backward(&out_grads, &mut ctx);
        }
        Ok(())
    }

    fn check_same_shape(&self, a: TensorId, b: TensorId, what: &str) -> Result<()> {
        if self.vals[a.0].shape != self.vals[b.0].shape {
            return Err(Error::ShapeMismatch(format!(
                "{what}: {:?} vs {:?}",
                self.vals[a.0].shape, self.vals[b.0].shape
            )));
        }
        Ok(())
    }

    // ---- elementwise binary -------------------------------------------------

    fn binary(&mut self, a: TensorId, b: TensorId, kind: BinKind) -> Result<TensorId> {
        self.check_same_shape(a, b, kind.name())?;
        let (va, vb) = (&self.vals[a.0].data, &self.vals[b.0].data);
        let data: Vec<f64> = match kind {
            BinKind::Add => va.iter().zip(vb).map(|(x, y)| x + y).collect(),
            BinKind::Sub => va.iter().zip(vb).map(|(x, y)| x - y).collect(),
            BinKind::Mul => va.iter().zip(vb).map(|(x, y)| x * y).collect(),
            BinKind::Div => va.iter().zip(vb).map(|(x, y)| x / y).collect(),
        };
        let rg = self.needs_grad(&[a, b]);
        let shape = self.vals[a.0].shape.clone();
        let out = self.output(data, shape, rg);
        if rg {
            self.push_record(vec![out], Box::new(BinaryOp { a, b, out, kind }));
        }
        Ok(out)
    }

    pub fn add(&mut self, a: TensorId, b: TensorId) -> Result<TensorId> {
        self.binary(a, b, BinKind::Add)
    }

    pub fn sub(&mut self, a: TensorId, b: TensorId) -> Result<TensorId> {
        self.binary(a, b, BinKind::Sub)
    }

    pub fn mul(&mut self, a: TensorId, b: TensorId) -> Result<TensorId> {
        self.binary(a, b, BinKind::Mul)
    }

    pub fn div(&mut self, a: TensorId, b: TensorId) -> Result<TensorId> {
        self.binary(a, b, BinKind::Div)
    }

    // ---- elementwise unary --------------------------------------------------

    fn unary(&mut self, a: TensorId, kind: UnKind) -> TensorId {
        let data: Vec<f64> = self.vals[a.0]
            .data
            .iter()
            .map(|&x| match kind {
                UnKind::Tanh => x.tanh(),
                UnKind::Sigmoid => 1.0 / (1.0 + (-x).exp()),
                UnKind::Abs => x.abs(),
                UnKind::Sqrt => x.sqrt(),
                UnKind::MaxConst(c) => x.max(c),
                UnKind::Affine(k, c) => k * x + c,
            })
            .collect();
        let rg = self.needs_grad(&[a]);
        let shape = self.vals[a.0].shape.clone();
        let out = self.output(data, shape, rg);
        if rg {
            self.push_record(vec![out], Box::new(UnaryOp { a, out, kind }));
        }
        out
    }

    pub fn tanh(&mut self, a: TensorId) -> TensorId {
        self.unary(a, UnKind::Tanh)
    }

    pub fn sigmoid(&mut self, a: TensorId) -> TensorId {
        self.unary(a, UnKind::Sigmoid)
    }

    /// Elementwise absolute value; the subgradient at 0 is 0.
    pub fn abs(&mut self, a: TensorId) -> TensorId {
        self.unary(a, UnKind::Abs)
    }

    /// Elementwise square root; the backward rule yields 0 where the output
    /// is 0, so downstream guards (e.g. a floor) cannot produce NaN.
    pub fn sqrt(&mut self, a: TensorId) -> TensorId {
        self.unary(a, UnKind::Sqrt)
    }

    /// Elementwise `max(x, c)` against a constant.
    pub fn max_const(&mut self, a: TensorId, c: f64) -> TensorId {
        self.unary(a, UnKind::MaxConst(c))
    }

    /// Elementwise `k*x + c` with constant coefficients.
    pub fn affine(&mut self, a: TensorId, k: f64, c: f64) -> TensorId {
        self.unary(a, UnKind::Affine(k, c))
    }

    pub fn neg(&mut self, a: TensorId) -> TensorId {
        self.affine(a, -1.0, 0.0)
    }

    // ---- reductions and broadcasts ------------------------------------------

    /// Mean over all elements, producing a scalar.
    pub fn mean_all(&mut self, a: TensorId) -> Result<TensorId> {
        let n = self.len(a);
        if n == 0 {
            return Err(Error::InvalidArgument("mean of an empty tensor".into()));
        }
        let mean = self.vals[a.0].data.iter().sum::<f64>() / n as f64;
        let rg = self.needs_grad(&[a]);
        let out = self.output(vec![mean], vec![1], rg);
        if rg {
            self.push_record(vec![out], Box::new(MeanAllOp { a, n }));
        }
        Ok(out)
    }

    /// Mean over the last axis: `[.., cols]` to `[..]` (flattened rows).
    pub fn mean_last(&mut self, a: TensorId) -> Result<TensorId> {
        let shape = &self.vals[a.0].shape;
        let cols = *shape.last().ok_or_else(|| {
            Error::ShapeMismatch("mean_last requires at least one axis".into())
        })?;
        if cols == 0 {
            return Err(Error::InvalidArgument("mean_last over zero columns".into()));
        }
        let rows = self.len(a) / cols;
        let va = &self.vals[a.0].data;
        let data: Vec<f64> = (0..rows)
            .map(|r| va[r * cols..(r + 1) * cols].iter().sum::<f64>() / cols as f64)
            .collect();
        let rg = self.needs_grad(&[a]);
        let out = self.output(data, vec![rows], rg);
        if rg {
            self.push_record(vec![out], Box::new(MeanLastOp { a, rows, cols }));
        }
        Ok(out)
    }

    /// Repeat each element of `a` (treated flat as rows) `cols` times,
    /// producing `[rows, cols]`.
    pub fn expand_last(&mut self, a: TensorId, cols: usize) -> TensorId {
        let rows = self.len(a);
        let va = &self.vals[a.0].data;
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            data.extend(std::iter::repeat(va[r]).take(cols));
        }
        let rg = self.needs_grad(&[a]);
        let out = self.output(data, vec![rows, cols], rg);
        if rg {
            self.push_record(vec![out], Box::new(ExpandLastOp { a, rows, cols }));
        }
        out
    }

    /// Same values under a new shape with the same element count.
    pub fn reshape(&mut self, a: TensorId, shape: &[usize]) -> Result<TensorId> {
        let count: usize = shape.iter().product();
        if count != self.len(a) {
            return Err(Error::ShapeMismatch(format!(
                "reshape: {} elements do not fit shape {shape:?}",
                self.len(a)
            )));
        }
        let data = self.vals[a.0].data.clone();
        let rg = self.needs_grad(&[a]);
        let out = self.output(data, shape.to_vec(), rg);
        if rg {
            self.push_record(vec![out], Box::new(ReshapeOp { a }));
        }
        Ok(out)
    }

    /// Select one element, producing a `[1]` tensor.
    pub fn select(&mut self, a: TensorId, index: usize) -> Result<TensorId> {
        if index >= self.len(a) {
            return Err(Error::InvalidArgument(format!(
                "select index {index} out of bounds for length {}",
                self.len(a)
            )));
        }
        let v = self.vals[a.0].data[index];
        let rg = self.needs_grad(&[a]);
        let out = self.output(vec![v], vec![1], rg);
        if rg {
            self.push_record(vec![out], Box::new(SelectOp { a, index }));
        }
        Ok(out)
    }

    /// Multiply every element of `a` by the scalar tensor `s` (`[1]`).
    pub fn scale_by(&mut self, a: TensorId, s: TensorId) -> Result<TensorId> {
        if self.len(s) != 1 {
            return Err(Error::ShapeMismatch(format!(
                "scale_by expects a scalar, got shape {:?}",
                self.shape(s)
            )));
        }
        let sv = self.vals[s.0].data[0];
        let data: Vec<f64> = self.vals[a.0].data.iter().map(|x| x * sv).collect();
        let rg = self.needs_grad(&[a, s]);
        let shape = self.vals[a.0].shape.clone();
        let out = self.output(data, shape, rg);
        if rg {
            self.push_record(vec![out], Box::new(ScaleByOp { a, s }));
        }
        Ok(out)
    }

    /// Add a bias vector to every row: `[rows, cols] + [cols]`.
    pub fn add_bias(&mut self, a: TensorId, bias: TensorId) -> Result<TensorId> {
        let cols = self.len(bias);
        let n = self.len(a);
        if cols == 0 || n % cols != 0 {
            return Err(Error::ShapeMismatch(format!(
                "add_bias: tensor of {n} elements is not a multiple of bias length {cols}"
            )));
        }
        let rows = n / cols;
        let (va, vb) = (&self.vals[a.0].data, &self.vals[bias.0].data);
        let mut data = Vec::with_capacity(n);
        for r in 0..rows {
            for c in 0..cols {
                data.push(va[r * cols + c] + vb[c]);
            }
        }
        let rg = self.needs_grad(&[a, bias]);
        let shape = self.vals[a.0].shape.clone();
        let out = self.output(data, shape, rg);
        if rg {
            self.push_record(vec![out], Box::new(AddBiasOp { a, bias, rows, cols }));
        }
        Ok(out)
    }

    // ---- matrix multiplication ----------------------------------------------

    /// `C[m,n] = A[m,k] · B[k,n]`, or `A[m,k] · B[n,k]ᵀ` when `trans_b`.
    ///
    /// Shapes are taken from the explicit dimensions; inputs are validated
    /// against them by total length, so callers may treat tensors as flat.
    pub fn matmul(
        &mut self,
        a: TensorId,
        b: TensorId,
        m: usize,
        k: usize,
        n: usize,
        trans_b: bool,
    ) -> Result<TensorId> {
        if self.len(a) != m * k {
            return Err(Error::ShapeMismatch(format!(
                "matmul: left operand has {} elements, expected {m}x{k}",
                self.len(a)
            )));
        }
        if self.len(b) != k * n {
            return Err(Error::ShapeMismatch(format!(
                "matmul: right operand has {} elements, expected {}",
                self.len(b),
                if trans_b { format!("{n}x{k}") } else { format!("{k}x{n}") }
            )));
        }
        let mut data = vec![0.0; m * n];
        let bs = if trans_b { (1, k as isize) } else { (n as isize, 1) };
        dgemm(
            m, k, n, 1.0,
            &self.vals[a.0].data, 0, (k as isize, 1),
            &self.vals[b.0].data, 0, bs,
            0.0, &mut data, 0, (n as isize, 1),
        );
        let rg = self.needs_grad(&[a, b]);
        let out = self.output(data, vec![m, n], rg);
        if rg {
            self.push_record(vec![out], Box::new(MatmulOp { a, b, m, k, n, trans_b }));
        }
        Ok(out)
    }

    // ---- complex compositions ------------------------------------------------

    /// Complex matrix product via three real products (Gauss's trick):
    /// with `P1 = Are·Bre`, `P2 = Aim·Bim`, `P3 = (Are+Aim)·(Bre+Bim)`,
    /// the result is `re = P1 − P2`, `im = P3 − P1 − P2`.
    pub fn complex_matmul(
        &mut self,
        a: ComplexPair,
        b: ComplexPair,
        m: usize,
        k: usize,
        n: usize,
        trans_b: bool,
    ) -> Result<ComplexPair> {
        let p1 = self.matmul(a.re, b.re, m, k, n, trans_b)?;
        let p2 = self.matmul(a.im, b.im, m, k, n, trans_b)?;
        let sa = self.add(a.re, a.im)?;
        let sb = self.add(b.re, b.im)?;
        let p3 = self.matmul(sa, sb, m, k, n, trans_b)?;
        let re = self.sub(p1, p2)?;
        let t = self.sub(p3, p1)?;
        let im = self.sub(t, p2)?;
        Ok(ComplexPair { re, im })
    }

    /// Complex matrix-vector product `W·v` with `W` square `[n, n]` and `v` `[n]`.
    pub fn complex_matvec(&mut self, w: ComplexPair, v: ComplexPair, n: usize) -> Result<ComplexPair> {
        self.complex_matmul(w, v, n, n, 1, false)
    }

    /// Elementwise complex modulus `sqrt(re² + im²)`; the subgradient at 0 is 0.
    pub fn complex_modulus(&mut self, z: ComplexPair) -> Result<TensorId> {
        self.check_same_shape(z.re, z.im, "complex_modulus")?;
        let (vre, vim) = (&self.vals[z.re.0].data, &self.vals[z.im.0].data);
        let data: Vec<f64> = vre
            .iter()
            .zip(vim)
            .map(|(a, b)| a.hypot(*b))
            .collect();
        let rg = self.needs_grad(&[z.re, z.im]);
        let shape = self.vals[z.re.0].shape.clone();
        let out = self.output(data, shape, rg);
        if rg {
            self.push_record(vec![out], Box::new(ComplexModulusOp { z, out }));
        }
        Ok(out)
    }
}

impl Default for Graph {
    fn default() -> Self {
        Graph::new()
    }
}

// ---- backward rules ----------------------------------------------------------

#[derive(Clone, Copy)]
enum BinKind {
    Add,
    Sub,
    Mul,
    Div,
}

impl BinKind {
    fn name(self) -> &'static str {
        match self {
            BinKind::Add => "add",
            BinKind::Sub => "sub",
            BinKind::Mul => "mul",
            BinKind::Div => "div",
        }
    }
}

struct BinaryOp {
    a: TensorId,
    b: TensorId,
    out: TensorId,
    kind: BinKind,
}

impl BackwardOp for BinaryOp {
    fn backward(&self, out_grads: &[Option<Vec<f64>>], ctx: &mut GradCtx) {
        let g = match &out_grads[0] {
            Some(g) => g,
            None => return,
        };
        match self.kind {
            BinKind::Add => {
                if let Some(ga) = ctx.grad_mut(self.a) {
                    for (d, gi) in ga.iter_mut().zip(g) {
                        *d += gi;
                    }
                }
                if let Some(gb) = ctx.grad_mut(self.b) {
                    for (d, gi) in gb.iter_mut().zip(g) {
                        *d += gi;
                    }
                }
            }
            BinKind::Sub => {
                if let Some(ga) = ctx.grad_mut(self.a) {
                    for (d, gi) in ga.iter_mut().zip(g) {
                        *d += gi;
                    }
                }
                if let Some(gb) = ctx.grad_mut(self.b) {
                    for (d, gi) in gb.iter_mut().zip(g) {
                        *d -= gi;
                    }
                }
            }
            BinKind::Mul => {
                let va = ctx.val(self.a);
                let vb = ctx.val(self.b);
                if let Some(ga) = ctx.grad_mut(self.a) {
                    for i in 0..g.len() {
                        ga[i] += g[i] * vb[i];
                    }
                }
                if let Some(gb) = ctx.grad_mut(self.b) {
                    for i in 0..g.len() {
                        gb[i] += g[i] * va[i];
                    }
                }
            }
            BinKind::Div => {
                let vb = ctx.val(self.b);
                let vout = ctx.val(self.out);
                if let Some(ga) = ctx.grad_mut(self.a) {
                    for i in 0..g.len() {
                        ga[i] += g[i] / vb[i];
                    }
                }
                if let Some(gb) = ctx.grad_mut(self.b) {
                    for i in 0..g.len() {
                        gb[i] -= g[i] * vout[i] / vb[i];
                    }
                }
            }
        }
    }
}

#[derive(Clone, Copy)]
enum UnKind {
    Tanh,
    Sigmoid,
    Abs,
    Sqrt,
    MaxConst(f64),
    Affine(f64, f64),
}

struct UnaryOp {
    a: TensorId,
    out: TensorId,
    kind: UnKind,
}

impl BackwardOp for UnaryOp {
    fn backward(&self, out_grads: &[Option<Vec<f64>>], ctx: &mut GradCtx) {
        let g = match &out_grads[0] {
            Some(g) => g,
            None => return,
        };
        let va = ctx.val(self.a);
        let vout = ctx.val(self.out);
        if let Some(ga) = ctx.grad_mut(self.a) {
            match self.kind {
                UnKind::Tanh => {
                    for i in 0..g.len() {
                        ga[i] += g[i] * (1.0 - vout[i] * vout[i]);
                    }
                }
                UnKind::Sigmoid => {
                    for i in 0..g.len() {
                        ga[i] += g[i] * vout[i] * (1.0 - vout[i]);
                    }
                }
                UnKind::Abs => {
                    for i in 0..g.len() {
                        ga[i] += g[i] * sign0(va[i]);
                    }
                }
                UnKind::Sqrt => {
                    for i in 0..g.len() {
                        if vout[i] > 0.0 {
                            ga[i] += g[i] * 0.5 / vout[i];
                        }
                    }
                }
                UnKind::MaxConst(c) => {
                    for i in 0..g.len() {
                        if va[i] > c {
                            ga[i] += g[i];
                        }
                    }
                }
                UnKind::Affine(k, _) => {
                    for i in 0..g.len() {
                        ga[i] += g[i] * k;
                    }
                }
            }
        }
    }
}

fn sign0(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

struct MeanAllOp {
    a: TensorId,
    n: usize,
}

impl BackwardOp for MeanAllOp {
    fn backward(&self, out_grads: &[Option<Vec<f64>>], ctx: &mut GradCtx) {
        let g = match &out_grads[0] {
            Some(g) => g[0],
            None => return,
        };
        let scale = g / self.n as f64;
        if let Some(ga) = ctx.grad_mut(self.a) {
            for d in ga.iter_mut() {
                *d += scale;
            }
        }
    }
}

struct MeanLastOp {
    a: TensorId,
    rows: usize,
    cols: usize,
}

impl BackwardOp for MeanLastOp {
    fn backward(&self, out_grads: &[Option<Vec<f64>>], ctx: &mut GradCtx) {
        let g = match &out_grads[0] {
            Some(g) => g,
            None => return,
        };
        let inv = 1.0 / self.cols as f64;
        if let Some(ga) = ctx.grad_mut(self.a) {
            for r in 0..self.rows {
                let gr = g[r] * inv;
                for d in &mut ga[r * self.cols..(r + 1) * self.cols] {
                    *d += gr;
                }
            }
        }
    }
}

struct ExpandLastOp {
    a: TensorId,
    rows: usize,
    cols: usize,
}

impl BackwardOp for ExpandLastOp {
    fn backward(&self, out_grads: &[Option<Vec<f64>>], ctx: &mut GradCtx) {
        let g = match &out_grads[0] {
            Some(g) => g,
            None => return,
        };
        if let Some(ga) = ctx.grad_mut(self.a) {
            for r in 0..self.rows {
                ga[r] += g[r * self.cols..(r + 1) * self.cols].iter().sum::<f64>();
            }
        }
    }
}

struct ReshapeOp {
    a: TensorId,
}

impl BackwardOp for ReshapeOp {
    fn backward(&self, out_grads: &[Option<Vec<f64>>], ctx: &mut GradCtx) {
        let g = match &out_grads[0] {
            Some(g) => g,
            None => return,
        };
        if let Some(ga) = ctx.grad_mut(self.a) {
            for (d, s) in ga.iter_mut().zip(g) {
                *d += s;
            }
        }
    }
}

struct SelectOp {
    a: TensorId,
    index: usize,
}

impl BackwardOp for SelectOp {
    fn backward(&self, out_grads: &[Option<Vec<f64>>], ctx: &mut GradCtx) {
        let g = match &out_grads[0] {
            Some(g) => g[0],
            None => return,
        };
        if let Some(ga) = ctx.grad_mut(self.a) {
            ga[self.index] += g;
        }
    }
}

struct ScaleByOp {
    a: TensorId,
    s: TensorId,
}

impl BackwardOp for ScaleByOp {
    fn backward(&self, out_grads: &[Option<Vec<f64>>], ctx: &mut GradCtx) {
        let g = match &out_grads[0] {
            Some(g) => g,
            None => return,
        };
        let sv = ctx.val(self.s)[0];
        let va = ctx.val(self.a);
        if let Some(ga) = ctx.grad_mut(self.a) {
            for i in 0..g.len() {
                ga[i] += g[i] * sv;
            }
        }
        if let Some(gs) = ctx.grad_mut(self.s) {
            gs[0] += g.iter().zip(va).map(|(gi, ai)| gi * ai).sum::<f64>();
        }
    }
}

struct AddBiasOp {
    a: TensorId,
    bias: TensorId,
    rows: usize,
    cols: usize,
}

impl BackwardOp for AddBiasOp {
    fn backward(&self, out_grads: &[Option<Vec<f64>>], ctx: &mut GradCtx) {
        let g = match &out_grads[0] {
            Some(g) => g,
            None => return,
        };
        if let Some(ga) = ctx.grad_mut(self.a) {
            for (d, gi) in ga.iter_mut().zip(g) {
                *d += gi;
            }
        }
        if let Some(gb) = ctx.grad_mut(self.bias) {
            for r in 0..self.rows {
                for c in 0..self.cols {
                    gb[c] += g[r * self.cols + c];
                }
            }
        }
    }
}

struct MatmulOp {
    a: TensorId,
    b: TensorId,
    m: usize,
    k: usize,
    n: usize,
    trans_b: bool,
}

impl BackwardOp for MatmulOp {
    fn backward(&self, out_grads: &[Option<Vec<f64>>], ctx: &mut GradCtx) {
        let g = match &out_grads[0] {
            Some(g) => g,
            None => return,
        };
        let (m, k, n) = (self.m, self.k, self.n);
        let va = ctx.val(self.a);
        let vb = ctx.val(self.b);
        if let Some(ga) = ctx.grad_mut(self.a) {
            // dA[m,k] = dC[m,n] · Bᵀ  (or dC · B when B is stored [n,k])
            let bs = if self.trans_b { (k as isize, 1) } else { (1, n as isize) };
            dgemm(m, n, k, 1.0, g, 0, (n as isize, 1), vb, 0, bs, 1.0, ga, 0, (k as isize, 1));
        }
        if let Some(gb) = ctx.grad_mut(self.b) {
            if self.trans_b {
                // dB[n,k] = dCᵀ[n,m] · A[m,k]
                dgemm(n, m, k, 1.0, g, 0, (1, n as isize), va, 0, (k as isize, 1), 1.0, gb, 0, (k as isize, 1));
            } else {
                // dB[k,n] = Aᵀ[k,m] · dC[m,n]
                dgemm(k, m, n, 1.0, va, 0, (1, k as isize), g, 0, (n as isize, 1), 1.0, gb, 0, (n as isize, 1));
            }
        }
    }
}

struct ComplexModulusOp {
    z: ComplexPair,
    out: TensorId,
}

impl BackwardOp for ComplexModulusOp {
    fn backward(&self, out_grads: &[Option<Vec<f64>>], ctx: &mut GradCtx) {
        let g = match &out_grads[0] {
            Some(g) => g,
            None => return,
        };
        let vre = ctx.val(self.z.re);
        let vim = ctx.val(self.z.im);
        let vout = ctx.val(self.out);
        if let Some(gre) = ctx.grad_mut(self.z.re) {
            for i in 0..g.len() {
                if vout[i] > 0.0 {
                    gre[i] += g[i] * vre[i] / vout[i];
                }
            }
        }
        if let Some(gim) = ctx.grad_mut(self.z.im) {
            for i in 0..g.len() {
                if vout[i] > 0.0 {
                    gim[i] += g[i] * vim[i] / vout[i];
                }
            }
        }
    }
}

// ---- GEMM wrapper --------------------------------------------------------------

/// Strided `C = alpha·A·B + beta·C` over `f64` slices.
///
/// Each operand is a buffer, an element offset, and `(row, col)` strides;
/// bounds of the touched extents are asserted in debug builds.
#[allow(clippy::too_many_arguments)]
pub(crate) fn dgemm(
    m: usize,
    k: usize,
    n: usize,
    alpha: f64,
    a: &[f64],
    a_off: usize,
    (rsa, csa): (isize, isize),
    b: &[f64],
    b_off: usize,
    (rsb, csb): (isize, isize),
    beta: f64,
    c: &mut [f64],
    c_off: usize,
    (rsc, csc): (isize, isize),
) {
    if m == 0 || n == 0 {
        return;
    }
    debug_assert!(extent(m, k, rsa, csa, a_off) <= a.len());
    debug_assert!(extent(k, n, rsb, csb, b_off) <= b.len());
    debug_assert!(extent(m, n, rsc, csc, c_off) <= c.len());
    unsafe {
        matrixmultiply::dgemm(
            m, k, n, alpha,
            a.as_ptr().add(a_off), rsa, csa,
            b.as_ptr().add(b_off), rsb, csb,
            beta,
            c.as_mut_ptr().add(c_off), rsc, csc,
        );
    }
}

fn extent(rows: usize, cols: usize, rs: isize, cs: isize, off: usize) -> usize {
    let last = off as isize + (rows as isize - 1) * rs + (cols as isize - 1) * cs;
    last as usize + 1
}

// ---- gradient checking -----------------------------------------------------------

/// Maximum relative error between analytic gradients and central finite
/// differences of `f` at `params`, with error measured per coordinate as
/// `|analytic − numeric| / max(1, |analytic|)`.
pub fn grad_check<F>(f: F, params: &[Vec<f64>], analytic: &[Vec<f64>], h: f64) -> f64
where
    F: Fn(&[Vec<f64>]) -> f64,
{
    assert!(h > 0.0, "finite-difference step must be positive");
    assert_eq!(params.len(), analytic.len());
    let mut work: Vec<Vec<f64>> = params.to_vec();
    let mut worst = 0.0_f64;
    for p in 0..params.len() {
        assert_eq!(params[p].len(), analytic[p].len());
        for i in 0..params[p].len() {
            let orig = work[p][i];
            work[p][i] = orig + h;
            let up = f(&work);
            work[p][i] = orig - h;
            let down = f(&work);
            work[p][i] = orig;
            let numeric = (up - down) / (2.0 * h);
            assert!(
                numeric.is_finite(),
                "non-finite finite-difference evaluation at parameter {p}, coordinate {i}"
            );
            let a = analytic[p][i];
            let err = (a - numeric).abs() / a.abs().max(1.0);
            worst = worst.max(err);
        }
    }
    worst
}

/// Build a scalar loss with `build`, run backward, and compare every leaf
/// gradient against central finite differences. Returns the max relative error.
///
/// `build` receives the graph and the leaf tensors in the order of `leaves`
/// and must return a scalar.
pub fn check_gradients<F>(build: F, leaves: &[(Vec<f64>, Vec<usize>)], h: f64) -> f64
where
    F: Fn(&mut Graph, &[TensorId]) -> TensorId,
{
    let eval = |vals: &[Vec<f64>]| -> f64 {
        let mut g = Graph::inference();
        let ids: Vec<TensorId> = vals
            .iter()
            .zip(leaves)
            .map(|(v, (_, shape))| g.constant(v.clone(), shape).expect("leaf shape"))
            .collect();
        let out = build(&mut g, &ids);
        assert_eq!(g.len(out), 1, "check_gradients requires a scalar loss");
        g.data(out)[0]
    };

    let mut g = Graph::new();
    let ids: Vec<TensorId> = leaves
        .iter()
        .map(|(v, shape)| g.param(v.clone(), shape).expect("leaf shape"))
        .collect();
    let out = build(&mut g, &ids);
    g.backward(out).expect("backward");
    let analytic: Vec<Vec<f64>> = ids
        .iter()
        .zip(leaves)
        .map(|(id, (v, _))| g.grad(*id).map(|s| s.to_vec()).unwrap_or_else(|| vec![0.0; v.len()]))
        .collect();
    let params: Vec<Vec<f64>> = leaves.iter().map(|(v, _)| v.clone()).collect();
    grad_check(eval, &params, &analytic, h)
}
