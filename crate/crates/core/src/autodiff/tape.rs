use std::cell::{Cell, RefCell};
use std::fmt;
use std::ops::{Add, AddAssign, Div, Mul, MulAssign, Neg, Sub, SubAssign};

use super::real::{sigmoid, Real};
use super::AdError;

/// Primitive kind of a recorded node. Kept for diagnostics and for the
/// adjoint-corruption test hook; backward propagation only reads the stored
/// partials.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum Op {
    Leaf,
    Add,
    Sub,
    Mul,
    Div,
    Neg,
    Min,
    Max,
    Exp,
    Log,
    Tanh,
    Sigmoid,
    Swish,
    Sqrt,
    Abs,
    Pow,
    Clamp,
    Select,
    Sin,
    Cos,
    Dot,
    Affine,
    Sum,
    MulSub,
    Custom,
}

impl Op {
    pub const ALL: [Op; 25] = [
        Op::Leaf,
        Op::Add,
        Op::Sub,
        Op::Mul,
        Op::Div,
        Op::Neg,
        Op::Min,
        Op::Max,
        Op::Exp,
        Op::Log,
        Op::Tanh,
        Op::Sigmoid,
        Op::Swish,
        Op::Sqrt,
        Op::Abs,
        Op::Pow,
        Op::Clamp,
        Op::Select,
        Op::Sin,
        Op::Cos,
        Op::Dot,
        Op::Affine,
        Op::Sum,
        Op::MulSub,
        Op::Custom,
    ];

    /// Lower-case name, e.g. `mulsub`.
    pub fn name(self) -> String {
        format!("{self:?}").to_lowercase()
    }
}

impl std::str::FromStr for Op {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let s = s.to_lowercase();
        Op::ALL
            .into_iter()
            .find(|op| op.name() == s)
            .ok_or_else(|| format!("unknown primitive {s:?}"))
    }
}

#[derive(Default)]
struct Nodes {
    values: Vec<f64>,
    ops: Vec<Op>,
    /// `offsets[i]..offsets[i + 1]` indexes the edges of node `i`.
    offsets: Vec<u32>,
    parents: Vec<u32>,
    partials: Vec<f64>,
}

impl Nodes {
    #[inline]
    fn push(&mut self, op: Op, value: f64) -> u32 {
        let index = self.values.len();
        assert!(index < u32::MAX as usize, "tape exceeds u32 node capacity");
        self.values.push(value);
        self.ops.push(op);
        self.offsets.push(self.parents.len() as u32);
        index as u32
    }

    #[inline]
    fn edge(&mut self, parent: u32, partial: f64) {
        self.parents.push(parent);
        self.partials.push(partial);
    }
}

/// Append-only record of a forward computation.
///
/// Nodes are stored in creation order, so parents always precede children and
/// the backward sweep is a single reverse pass. Edges live in flat arrays
/// (`parent index`, `local partial`) so a fused node such as an affine layer
/// output costs one node and one edge per differentiable input.
///
/// A tape is single-threaded (`!Sync`); build one tape per rollout.
pub struct Tape {
    nodes: RefCell<Nodes>,
    corrupt: Cell<Option<(Op, f64)>>,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

impl fmt::Debug for Tape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Tape")
            .field("nodes", &self.len())
            .field("edges", &self.edge_count())
            .finish()
    }
}

impl Tape {
    pub fn new() -> Self {
        Self {
            nodes: RefCell::new(Nodes::default()),
            corrupt: Cell::new(None),
        }
    }

    pub fn with_capacity(nodes: usize, edges: usize) -> Self {
        let tape = Self::new();
        {
            let mut n = tape.nodes.borrow_mut();
            n.values.reserve(nodes);
            n.ops.reserve(nodes);
            n.offsets.reserve(nodes);
            n.parents.reserve(edges);
            n.partials.reserve(edges);
        }
        tape
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn edge_count(&self) -> usize {
        self.nodes.borrow().parents.len()
    }

    /// Bytes held by the node and edge buffers (capacity, not length).
    pub fn memory_bytes(&self) -> usize {
        let n = self.nodes.borrow();
        n.values.capacity() * 8
            + n.ops.capacity()
            + n.offsets.capacity() * 4
            + n.parents.capacity() * 4
            + n.partials.capacity() * 8
    }

    /// Drops all nodes, keeping the allocations.
    pub fn clear(&self) {
        let mut n = self.nodes.borrow_mut();
        n.values.clear();
        n.ops.clear();
        n.offsets.clear();
        n.parents.clear();
        n.partials.clear();
    }

    /// An independent variable. Gradients are reported for leaves.
    pub fn leaf(&self, value: f64) -> Var<'_> {
        let index = self.nodes.borrow_mut().push(Op::Leaf, value);
        Var {
            tape: Some(self),
            index,
            value,
        }
    }

    pub fn leaves(&self, values: &[f64]) -> Vec<Var<'_>> {
        values.iter().map(|&v| self.leaf(v)).collect()
    }

    /// Records a node with explicit local partials, one per input.
    ///
    /// Constant inputs are accepted and contribute no edge.
    pub fn record<'t>(
        &'t self,
        op: Op,
        inputs: &[Var<'t>],
        value: f64,
        partials: &[f64],
    ) -> Result<Var<'t>, AdError> {
        if inputs.len() != partials.len() {
            return Err(AdError::ArityMismatch {
                inputs: inputs.len(),
                partials: partials.len(),
            });
        }
        for v in inputs {
            if let Some(t) = v.tape {
                if !std::ptr::eq(t, self) {
                    return Err(AdError::CrossTape);
                }
            }
        }
        let mut n = self.nodes.borrow_mut();
        let index = n.push(op, value);
        for (v, &d) in inputs.iter().zip(partials) {
            if v.tape.is_some() {
                n.edge(v.index, d);
            }
        }
        Ok(Var {
            tape: Some(self),
            index,
            value,
        })
    }

    /// Reverse sweep from `output`. The adjoint buffer is freshly zeroed on
    /// every call and the recorded values are left untouched.
    pub fn backward(&self, output: Var<'_>) -> Result<Adjoints, AdError> {
        let n = self.nodes.borrow();
        let len = n.values.len();
        if len == 0 {
            return Err(AdError::EmptyTape);
        }
        let mut adjoint = vec![0.0; len];
        let Some(t) = output.tape else {
            return Ok(Adjoints { adjoint });
        };
        if !std::ptr::eq(t, self) {
            return Err(AdError::CrossTape);
        }
        let end = output.index as usize + 1;
        adjoint[output.index as usize] = 1.0;
        let corrupt = self.corrupt.get();
        let total_edges = n.parents.len() as u32;
        for i in (0..end).rev() {
            let mut a = adjoint[i];
            if a == 0.0 {
                continue;
            }
            if let Some((op, factor)) = corrupt {
                if n.ops[i] == op {
                    a *= factor;
                }
            }
            let lo = n.offsets[i] as usize;
            let hi = if i + 1 < len {
                n.offsets[i + 1]
            } else {
                total_edges
            } as usize;
            for e in lo..hi {
                adjoint[n.parents[e] as usize] += a * n.partials[e];
            }
        }
        Ok(Adjoints { adjoint })
    }

    /// Gradient of `output` with respect to `leaves`, in order.
    pub fn gradient(&self, output: Var<'_>, leaves: &[Var<'_>]) -> Result<Vec<f64>, AdError> {
        let adj = self.backward(output)?;
        Ok(leaves.iter().map(|v| adj.wrt(*v)).collect())
    }

    /// Test hook: scales the adjoint flowing out of every node of kind `op`
    /// by `factor` during backward sweeps. Used as a negative control for
    /// gradient checking.
    #[doc(hidden)]
    pub fn corrupt_adjoint(&self, op: Op, factor: f64) {
        self.corrupt.set(Some((op, factor)));
    }

    #[inline]
    fn push1(&self, op: Op, value: f64, a: u32, da: f64) -> Var<'_> {
        let mut n = self.nodes.borrow_mut();
        let index = n.push(op, value);
        n.edge(a, da);
        Var {
            tape: Some(self),
            index,
            value,
        }
    }

    #[inline]
    fn push2(&self, op: Op, value: f64, a: u32, da: f64, b: u32, db: f64) -> Var<'_> {
        let mut n = self.nodes.borrow_mut();
        let index = n.push(op, value);
        n.edge(a, da);
        n.edge(b, db);
        Var {
            tape: Some(self),
            index,
            value,
        }
    }
}

/// Result of a backward sweep: one adjoint per tape node.
#[derive(Clone, Debug)]
pub struct Adjoints {
    adjoint: Vec<f64>,
}

impl Adjoints {
    /// Derivative of the output with respect to `v` (0 for constants).
    pub fn wrt(&self, v: Var<'_>) -> f64 {
        match v.tape {
            Some(_) => self.adjoint[v.index as usize],
            None => 0.0,
        }
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.adjoint
    }
}

/// A taped scalar.
///
/// `Var` is `Copy`; it holds a borrow of its tape, its node index, and its
/// primal value. A `Var` built with [`Var::constant`] (or produced only from
/// constants) is not on any tape and carries no derivative.
#[derive(Clone, Copy)]
pub struct Var<'t> {
    tape: Option<&'t Tape>,
    index: u32,
    value: f64,
}

impl fmt::Debug for Var<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.tape {
            Some(_) => write!(f, "Var(#{} = {})", self.index, self.value),
            None => write!(f, "Var(const {})", self.value),
        }
    }
}

fn same_tape<'t>(a: &'t Tape, b: &'t Tape) -> &'t Tape {
    assert!(std::ptr::eq(a, b), "{}", AdError::CrossTape);
    a
}

impl<'t> Var<'t> {
    pub fn constant(value: f64) -> Self {
        Var {
            tape: None,
            index: u32::MAX,
            value,
        }
    }

    pub fn value(&self) -> f64 {
        self.value
    }

    /// Node index, or `None` for constants.
    pub fn index(&self) -> Option<usize> {
        self.tape.map(|_| self.index as usize)
    }

    pub fn is_constant(&self) -> bool {
        self.tape.is_none()
    }

    fn tape_of(vars: &[Var<'t>]) -> Option<&'t Tape> {
        let mut found: Option<&'t Tape> = None;
        for v in vars {
            if let Some(t) = v.tape {
                found = Some(match found {
                    Some(f) => same_tape(f, t),
                    None => t,
                });
            }
        }
        found
    }

    #[inline]
    fn unary(self, op: Op, value: f64, d: f64) -> Self {
        match self.tape {
            None => Var::constant(value),
            Some(t) => t.push1(op, value, self.index, d),
        }
    }

    #[inline]
    fn binary(self, other: Self, op: Op, value: f64, da: f64, db: f64) -> Self {
        match (self.tape, other.tape) {
            (None, None) => Var::constant(value),
            (Some(t), None) => t.push1(op, value, self.index, da),
            (None, Some(t)) => t.push1(op, value, other.index, db),
            (Some(ta), Some(tb)) => {
                same_tape(ta, tb).push2(op, value, self.index, da, other.index, db)
            }
        }
    }

    /// Node over many inputs; `partial(i)` gives the local derivative for
    /// input `i`.
    fn nary(inputs: &[Self], op: Op, value: f64, partial: impl Fn(usize) -> f64) -> Self {
        match Self::tape_of(inputs) {
            None => Var::constant(value),
            Some(t) => {
                let mut n = t.nodes.borrow_mut();
                let index = n.push(op, value);
                for (i, v) in inputs.iter().enumerate() {
                    if v.tape.is_some() {
                        n.edge(v.index, partial(i));
                    }
                }
                Var {
                    tape: Some(t),
                    index,
                    value,
                }
            }
        }
    }
}

impl<'t> Add for Var<'t> {
    type Output = Self;
    #[inline]
    fn add(self, rhs: Self) -> Self {
        self.binary(rhs, Op::Add, self.value + rhs.value, 1.0, 1.0)
    }
}

impl<'t> Sub for Var<'t> {
    type Output = Self;
    #[inline]
    fn sub(self, rhs: Self) -> Self {
        self.binary(rhs, Op::Sub, self.value - rhs.value, 1.0, -1.0)
    }
}

impl<'t> Mul for Var<'t> {
    type Output = Self;
    #[inline]
    fn mul(self, rhs: Self) -> Self {
        self.binary(rhs, Op::Mul, self.value * rhs.value, rhs.value, self.value)
    }
}

impl<'t> Div for Var<'t> {
    type Output = Self;
    #[inline]
    fn div(self, rhs: Self) -> Self {
        let q = self.value / rhs.value;
        self.binary(rhs, Op::Div, q, 1.0 / rhs.value, -q / rhs.value)
    }
}

impl<'t> Neg for Var<'t> {
    type Output = Self;
    #[inline]
    fn neg(self) -> Self {
        self.unary(Op::Neg, -self.value, -1.0)
    }
}

impl<'t> Add<f64> for Var<'t> {
    type Output = Self;
    #[inline]
    fn add(self, rhs: f64) -> Self {
        self.unary(Op::Add, self.value + rhs, 1.0)
    }
}

impl<'t> Sub<f64> for Var<'t> {
    type Output = Self;
    #[inline]
    fn sub(self, rhs: f64) -> Self {
        self.unary(Op::Sub, self.value - rhs, 1.0)
    }
}

impl<'t> Mul<f64> for Var<'t> {
    type Output = Self;
    #[inline]
    fn mul(self, rhs: f64) -> Self {
        self.unary(Op::Mul, self.value * rhs, rhs)
    }
}

impl<'t> Div<f64> for Var<'t> {
    type Output = Self;
    #[inline]
    fn div(self, rhs: f64) -> Self {
        self.unary(Op::Div, self.value / rhs, 1.0 / rhs)
    }
}

impl<'t> AddAssign for Var<'t> {
    fn add_assign(&mut self, rhs: Self) {
        *self = *self + rhs;
    }
}

impl<'t> SubAssign for Var<'t> {
    fn sub_assign(&mut self, rhs: Self) {
        *self = *self - rhs;
    }
}

impl<'t> MulAssign for Var<'t> {
    fn mul_assign(&mut self, rhs: Self) {
        *self = *self * rhs;
    }
}

impl<'t> Real for Var<'t> {
    fn constant(value: f64) -> Self {
        Var::constant(value)
    }

    #[inline]
    fn value(self) -> f64 {
        self.value
    }

    fn exp(self) -> Self {
        let e = self.value.exp();
        self.unary(Op::Exp, e, e)
    }

    fn ln(self) -> Self {
        self.unary(Op::Log, self.value.ln(), 1.0 / self.value)
    }

    fn sqrt(self) -> Self {
        let s = self.value.sqrt();
        self.unary(Op::Sqrt, s, 0.5 / s)
    }

    fn tanh(self) -> Self {
        let t = self.value.tanh();
        self.unary(Op::Tanh, t, 1.0 - t * t)
    }

    fn sigmoid(self) -> Self {
        let s = sigmoid(self.value);
        self.unary(Op::Sigmoid, s, s * (1.0 - s))
    }

    fn swish(self) -> Self {
        let x = self.value;
        let s = sigmoid(x);
        self.unary(Op::Swish, x * s, s + x * s * (1.0 - s))
    }

    fn sin(self) -> Self {
        self.unary(Op::Sin, self.value.sin(), self.value.cos())
    }

    fn cos(self) -> Self {
        self.unary(Op::Cos, self.value.cos(), -self.value.sin())
    }

    fn abs(self) -> Self {
        let d = if self.value > 0.0 {
            1.0
        } else if self.value < 0.0 {
            -1.0
        } else {
            0.0
        };
        self.unary(Op::Abs, self.value.abs(), d)
    }

    fn powf(self, exponent: f64) -> Self {
        let x = self.value;
        self.unary(Op::Pow, x.powf(exponent), exponent * x.powf(exponent - 1.0))
    }

    fn min(self, other: Self) -> Self {
        if self.value <= other.value {
            self.binary(other, Op::Min, self.value, 1.0, 0.0)
        } else {
            self.binary(other, Op::Min, other.value, 0.0, 1.0)
        }
    }

    fn max(self, other: Self) -> Self {
        if self.value >= other.value {
            self.binary(other, Op::Max, self.value, 1.0, 0.0)
        } else {
            self.binary(other, Op::Max, other.value, 0.0, 1.0)
        }
    }

    fn clamp(self, lo: f64, hi: f64) -> Self {
        if self.value < lo {
            self.unary(Op::Clamp, lo, 0.0)
        } else if self.value > hi {
            self.unary(Op::Clamp, hi, 0.0)
        } else {
            self.unary(Op::Clamp, self.value, 1.0)
        }
    }

    fn stop_gradient(self) -> Self {
        Var::constant(self.value)
    }

    fn select(cond: bool, if_true: Self, if_false: Self) -> Self {
        if cond {
            if_true.binary(if_false, Op::Select, if_true.value, 1.0, 0.0)
        } else {
            if_true.binary(if_false, Op::Select, if_false.value, 0.0, 1.0)
        }
    }

    fn dot(a: &[Self], b: &[Self]) -> Self {
        debug_assert_eq!(a.len(), b.len());
        let mut acc = 0.0;
        for (x, y) in a.iter().zip(b) {
            acc += x.value * y.value;
        }
        dot_node(a, b, None, Op::Dot, acc)
    }

    fn affine(weights: &[Self], inputs: &[Self], bias: Self) -> Self {
        debug_assert_eq!(weights.len(), inputs.len());
        let mut acc = 0.0;
        for (x, y) in weights.iter().zip(inputs) {
            acc += x.value * y.value;
        }
        dot_node(weights, inputs, Some(bias), Op::Affine, acc + bias.value)
    }

    fn sum(xs: &[Self]) -> Self {
        let mut acc = 0.0;
        for x in xs {
            acc += x.value;
        }
        Var::nary(xs, Op::Sum, acc, |_| 1.0)
    }

    fn mul_sub(a: Self, b: Self, c: Self, d: Self) -> Self {
        let value = a.value * b.value - c.value * d.value;
        let inputs = [a, b, c, d];
        let partials = [b.value, a.value, -d.value, -c.value];
        Var::nary(&inputs, Op::MulSub, value, |i| partials[i])
    }

    fn dot3(a: [Self; 3], b: [Self; 3]) -> Self {
        let value = a[0].value * b[0].value + a[1].value * b[1].value + a[2].value * b[2].value;
        dot_node(&a, &b, None, Op::Dot, value)
    }
}

fn dot_node<'t>(
    a: &[Var<'t>],
    b: &[Var<'t>],
    bias: Option<Var<'t>>,
    op: Op,
    value: f64,
) -> Var<'t> {
    let mut tape = Var::tape_of(a);
    if let Some(t) = Var::tape_of(b) {
        tape = Some(match tape {
            Some(f) => same_tape(f, t),
            None => t,
        });
    }
    if let Some(Var { tape: Some(t), .. }) = bias {
        tape = Some(match tape {
            Some(f) => same_tape(f, t),
            None => t,
        });
    }
    let Some(t) = tape else {
        return Var::constant(value);
    };
    let mut n = t.nodes.borrow_mut();
    let index = n.push(op, value);
    for (x, y) in a.iter().zip(b) {
        if x.tape.is_some() {
            n.edge(x.index, y.value);
        }
        if y.tape.is_some() {
            n.edge(y.index, x.value);
        }
    }
    if let Some(Var {
        tape: Some(_),
        index: bi,
        ..
    }) = bias
    {
        n.edge(bi, 1.0);
    }
    Var {
        tape: Some(t),
        index,
        value,
    }
}
