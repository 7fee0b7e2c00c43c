//! Dormand–Prince 5(4) stepper with the standard 4th-order continuous
//! extension, for autonomous systems `dy/ds = f(y)`.

/// Right-hand side of an autonomous ODE system.
pub trait VectorField: Sync {
    fn dim(&self) -> usize;
    fn eval(&self, y: &[f64], out: &mut [f64]);
}

const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;

const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

/// Continuous extension over one accepted step.
#[derive(Debug, Clone)]
pub struct DenseStep {
    pub s0: f64,
    pub h: f64,
    r: [Vec<f64>; 5],
}

impl DenseStep {
    pub fn s1(&self) -> f64 {
        self.s0 + self.h
    }

    /// State at `s` inside the step.
    pub fn eval_into(&self, s: f64, out: &mut [f64]) {
        let th = (s - self.s0) / self.h;
        let th1 = 1.0 - th;
        for i in 0..out.len() {
            out[i] = self.r[0][i]
                + th * (self.r[1][i] + th1 * (self.r[2][i] + th * (self.r[3][i] + th1 * self.r[4][i])));
        }
    }

    pub fn eval(&self, s: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.r[0].len()];
        self.eval_into(s, &mut out);
        out
    }
}

/// Work buffers and tolerances for stepping one system.
pub struct Dopri5 {
    pub rtol: f64,
    pub atol: f64,
    k: [Vec<f64>; 7],
    tmp: Vec<f64>,
    y_new: Vec<f64>,
    err: Vec<f64>,
}

/// Outcome of one attempted step.
pub struct Attempt {
    /// Scaled RMS error; accepted when ≤ 1.
    pub error: f64,
}

impl Dopri5 {
    pub fn new(dim: usize, rtol: f64, atol: f64) -> Self {
        let v = || vec![0.0; dim];
        Self {
            rtol,
            atol,
            k: [v(), v(), v(), v(), v(), v(), v()],
            tmp: v(),
            y_new: v(),
            err: v(),
        }
    }

    /// Sets the first stage `f(y)`; must be called before the first step.
    pub fn prime(&mut self, f: &dyn VectorField, y: &[f64]) {
        f.eval(y, &mut self.k[0]);
    }

    /// Derivative at the current point (first stage).
    pub fn slope(&self) -> &[f64] {
        &self.k[0]
    }

    /// Derivative at the proposed new point (last stage, FSAL).
    pub fn new_slope(&self) -> &[f64] {
        &self.k[6]
    }

    pub fn new_state(&self) -> &[f64] {
        &self.y_new
    }

    /// Attempts a step of signed size `h` from `y`.
    pub fn attempt(&mut self, f: &dyn VectorField, y: &[f64], h: f64) -> Attempt {
        let n = y.len();
        macro_rules! stage {
            ($dst:expr, $($c:expr => $ki:expr),+) => {{
                for i in 0..n {
                    let mut acc = 0.0;
                    $( acc += $c * self.k[$ki][i]; )+
                    self.tmp[i] = y[i] + h * acc;
                }
                let (tmp, k) = (&self.tmp, &mut self.k);
                f.eval(tmp, &mut k[$dst]);
            }};
        }
        stage!(1, A21 => 0);
        stage!(2, A31 => 0, A32 => 1);
        stage!(3, A41 => 0, A42 => 1, A43 => 2);
        stage!(4, A51 => 0, A52 => 1, A53 => 2, A54 => 3);
        stage!(5, A61 => 0, A62 => 1, A63 => 2, A64 => 3, A65 => 4);
        for i in 0..n {
            self.y_new[i] = y[i]
                + h * (A71 * self.k[0][i] + A73 * self.k[2][i] + A74 * self.k[3][i] + A75 * self.k[4][i] + A76 * self.k[5][i]);
        }
        {
            let (yn, k) = (&self.y_new, &mut self.k);
            f.eval(yn, &mut k[6]);
        }
        let mut acc = 0.0;
        for i in 0..n {
            self.err[i] = h
                * (E1 * self.k[0][i] + E3 * self.k[2][i] + E4 * self.k[3][i] + E5 * self.k[4][i] + E6 * self.k[5][i] + E7 * self.k[6][i]);
            let sc = self.atol + self.rtol * y[i].abs().max(self.y_new[i].abs());
            acc += (self.err[i] / sc).powi(2);
        }
        Attempt { error: (acc / n as f64).sqrt() }
    }

    /// Dense output for the last attempted step; call before `accept`.
    pub fn dense(&self, y: &[f64], s0: f64, h: f64) -> DenseStep {
        let n = y.len();
        let mut r: [Vec<f64>; 5] = Default::default();
        for v in r.iter_mut() {
            v.resize(n, 0.0);
        }
        for i in 0..n {
            let ydiff = self.y_new[i] - y[i];
            let bspl = h * self.k[0][i] - ydiff;
            r[0][i] = y[i];
            r[1][i] = ydiff;
            r[2][i] = bspl;
            r[3][i] = ydiff - h * self.k[6][i] - bspl;
            r[4][i] = h
                * (D1 * self.k[0][i] + D3 * self.k[2][i] + D4 * self.k[3][i] + D5 * self.k[4][i] + D6 * self.k[5][i] + D7 * self.k[6][i]);
        }
        DenseStep { s0, h, r }
    }

    /// Commits the attempted step: `y ← y_new`, first stage ← last stage.
    pub fn accept(&mut self, y: &mut [f64]) {
        y.copy_from_slice(&self.y_new);
        self.k.swap(0, 6);
    }

    /// Step-size factor for the next attempt from the current error.
    pub fn factor(error: f64) -> f64 {
        if error == 0.0 {
            return 5.0;
        }
        (0.9 * error.powf(-0.2)).clamp(0.2, 5.0)
    }
}
