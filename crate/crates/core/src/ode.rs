//! Explicit Runge–Kutta integration of autonomous systems `ẏ = f(y)` in three
//! dimensions: the 8(5,3) pair of Dormand and Prince with its seventh-order
//! continuous extension.
//!
//! The right-hand side returns `None` outside its domain. A stage that leaves
//! the domain shrinks the step; if the step underflows near the boundary the
//! integration stops with [`StepFailure::LeftDomain`].

use crate::geometry::Vec3;

/// Local error control.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerances {
    pub rtol: f64,
    pub atol: f64,
    /// Largest step magnitude.
    pub h_max: f64,
    pub max_steps: usize,
}

impl Tolerances {
    pub fn new(rtol: f64, atol: f64) -> Self {
        Self {
            rtol,
            atol,
            ..Self::default()
        }
    }

    pub fn with_h_max(mut self, h_max: f64) -> Self {
        self.h_max = h_max;
        self
    }

    pub fn is_valid(&self) -> bool {
        self.rtol > 0.0 && self.atol > 0.0 && self.h_max > 0.0 && self.max_steps > 0
    }
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            rtol: 1e-10,
            atol: 1e-12,
            h_max: 0.5,
            max_steps: 10_000_000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepFailure {
    /// The solution cannot be continued without leaving the domain.
    LeftDomain,
    /// The step size dropped below round-off of `t`.
    StepUnderflow,
    MaxSteps,
}

/// Dense output over one accepted step `[t0, t0 + h]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DenseStep {
    pub t0: f64,
    pub h: f64,
    c: [Vec3; 8],
}

impl DenseStep {
    pub fn t1(&self) -> f64 {
        self.t0 + self.h
    }

    pub fn eval(&self, t: f64) -> Vec3 {
        let s = (t - self.t0) / self.h;
        let s1 = 1.0 - s;
        let c = &self.c;
        let conpar = c[4] + (c[5] + (c[6] + c[7] * s) * s1) * s;
        c[0] + (c[1] + (c[2] + (c[3] + conpar * s1) * s) * s1) * s
    }
}

#[derive(Debug, Clone, Copy)]
struct Stages {
    k1: Vec3,
    k6: Vec3,
    k7: Vec3,
    k8: Vec3,
    k9: Vec3,
    k10: Vec3,
    k11: Vec3,
    k12: Vec3,
}

const SAFE: f64 = 0.9;
const FAC_MIN: f64 = 1.0 / 3.0;
const FAC_MAX: f64 = 6.0;
const BETA: f64 = 0.0;
const EXPO: f64 = 1.0 / 8.0 - BETA * 0.2;
const DOMAIN_SHRINK: f64 = 0.25;

/// Adaptive integrator state. `f` is evaluated only through `rhs`.
pub struct Dop853<F> {
    rhs: F,
    tol: Tolerances,
    dir: f64,
    t: f64,
    y: Vec3,
    f: Vec3,
    h: f64,
    facold: f64,
    last_rejected: bool,
    steps: usize,
    evals: u64,
    // last accepted step
    t_old: f64,
    y_old: Vec3,
    h_old: f64,
    stages: Option<Stages>,
    dense: Option<DenseStep>,
}

impl<F: FnMut(&Vec3) -> Option<Vec3>> Dop853<F> {
    /// Starts at `(t0, y0)` integrating in the direction of `dir` (its sign).
    pub fn new(
        mut rhs: F,
        t0: f64,
        y0: Vec3,
        dir: f64,
        tol: Tolerances,
    ) -> Result<Self, StepFailure> {
        let f0 = rhs(&y0).ok_or(StepFailure::LeftDomain)?;
        let dir = if dir < 0.0 { -1.0 } else { 1.0 };
        let mut s = Self {
            rhs,
            tol,
            dir,
            t: t0,
            y: y0,
            f: f0,
            h: 0.0,
            facold: 1e-4,
            last_rejected: false,
            steps: 0,
            evals: 1,
            t_old: t0,
            y_old: y0,
            h_old: 0.0,
            stages: None,
            dense: None,
        };
        s.h = s.initial_step();
        Ok(s)
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    pub fn y(&self) -> Vec3 {
        self.y
    }

    /// `f(y)` at the current point.
    pub fn dydt(&self) -> Vec3 {
        self.f
    }

    pub fn t_prev(&self) -> f64 {
        self.t_old
    }

    pub fn y_prev(&self) -> Vec3 {
        self.y_old
    }

    pub fn evaluations(&self) -> u64 {
        self.evals
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    /// Evaluates the right-hand side at an arbitrary point, counted with the
    /// solver's own evaluations.
    pub fn eval_external(&mut self, y: &Vec3) -> Option<Vec3> {
        self.eval(y)
    }

    fn eval(&mut self, y: &Vec3) -> Option<Vec3> {
        self.evals += 1;
        (self.rhs)(y)
    }

    fn scale(&self, a: f64, b: f64) -> f64 {
        self.tol.atol + self.tol.rtol * a.abs().max(b.abs())
    }

    fn initial_step(&mut self) -> f64 {
        let (y, f) = (self.y, self.f);
        let mut dnf = 0.0;
        let mut dny = 0.0;
        for i in 0..3 {
            let sk = self.scale(y[i], y[i]);
            dnf += (f[i] / sk).powi(2);
            dny += (y[i] / sk).powi(2);
        }
        let mut h = if dnf <= 1e-10 || dny <= 1e-10 {
            1e-6
        } else {
            (dny / dnf).sqrt() * 0.01
        };
        h = h.min(self.tol.h_max);
        let y1 = y + f * (h * self.dir);
        let Some(f1) = self.eval(&y1) else {
            return h * self.dir * 0.01;
        };
        let mut der2 = 0.0;
        for i in 0..3 {
            let sk = self.scale(y[i], y[i]);
            der2 += ((f1[i] - f[i]) / sk).powi(2);
        }
        let der2 = der2.sqrt() / h;
        let der12 = der2.abs().max(dnf.sqrt());
        let h1 = if der12 <= 1e-15 {
            (h * 1e-3).max(1e-6)
        } else {
            (0.01 / der12).powf(EXPO)
        };
        (100.0 * h).min(h1).min(self.tol.h_max) * self.dir
    }

    /// Takes one accepted step. When `t_stop` is given the step does not pass it.
    pub fn step(&mut self, t_stop: Option<f64>) -> Result<(), StepFailure> {
        use coef::*;
        loop {
            if self.steps >= self.tol.max_steps {
                return Err(StepFailure::MaxSteps);
            }
            let mut h = self.h;
            if h.abs() > self.tol.h_max {
                h = self.tol.h_max * self.dir;
            }
            if let Some(ts) = t_stop {
                if (self.t + h - ts) * self.dir > 0.0 {
                    h = ts - self.t;
                }
            }
            if h.abs() <= 10.0 * f64::EPSILON * self.t.abs().max(1.0) {
                return Err(StepFailure::StepUnderflow);
            }
            self.steps += 1;
            let y = self.y;
            let k1 = self.f;

            macro_rules! stage {
                ($($k:expr, $a:expr);+) => {{
                    let z = y + (Vec3::zeros() $(+ $k * $a)+) * h;
                    match self.eval(&z) {
                        Some(v) => v,
                        None => {
                            self.shrink_for_domain()?;
                            continue;
                        }
                    }
                }};
            }

            let k2 = stage!(k1, A21);
            let k3 = stage!(k1, A31; k2, A32);
            let k4 = stage!(k1, A41; k3, A43);
            let k5 = stage!(k1, A51; k3, A53; k4, A54);
            let k6 = stage!(k1, A61; k4, A64; k5, A65);
            let k7 = stage!(k1, A71; k4, A74; k5, A75; k6, A76);
            let k8 = stage!(k1, A81; k4, A84; k5, A85; k6, A86; k7, A87);
            let k9 = stage!(k1, A91; k4, A94; k5, A95; k6, A96; k7, A97; k8, A98);
            let k10 = stage!(k1, A101; k4, A104; k5, A105; k6, A106; k7, A107; k8, A108; k9, A109);
            let k11 = stage!(k1, A111; k4, A114; k5, A115; k6, A116; k7, A117; k8, A118; k9, A119; k10, A1110);
            let k12 = stage!(k1, A121; k4, A124; k5, A125; k6, A126; k7, A127; k8, A128; k9, A129; k10, A1210; k11, A1211);

            let bsum =
                k1 * B1 + k6 * B6 + k7 * B7 + k8 * B8 + k9 * B9 + k10 * B10 + k11 * B11 + k12 * B12;
            let y_new = y + bsum * h;

            let mut err = 0.0;
            let mut err2 = 0.0;
            for i in 0..3 {
                let sk = self.scale(y[i], y_new[i]);
                let e2 = bsum[i] - BHH1 * k1[i] - BHH2 * k9[i] - BHH3 * k12[i];
                err2 += (e2 / sk).powi(2);
                let e = ER1 * k1[i]
                    + ER6 * k6[i]
                    + ER7 * k7[i]
                    + ER8 * k8[i]
                    + ER9 * k9[i]
                    + ER10 * k10[i]
                    + ER11 * k11[i]
                    + ER12 * k12[i];
                err += (e / sk).powi(2);
            }
            let mut deno = err + 0.01 * err2;
            if deno <= 0.0 {
                deno = 1.0;
            }
            let err = h.abs() * err * (1.0 / (deno * 3.0)).sqrt();

            let fac11 = err.powf(EXPO);
            let fac = fac11 / self.facold.powf(BETA);
            let fac = (1.0 / FAC_MAX).max((1.0 / FAC_MIN).min(fac / SAFE));
            let mut h_new = h / fac;

            if err <= 1.0 {
                let Some(f_new) = self.eval(&y_new) else {
                    self.shrink_for_domain()?;
                    continue;
                };
                self.facold = err.max(1e-4);
                if self.last_rejected {
                    h_new = if self.dir > 0.0 {
                        h_new.min(h)
                    } else {
                        h_new.max(h)
                    };
                    self.last_rejected = false;
                }
                self.t_old = self.t;
                self.y_old = y;
                self.h_old = h;
                self.stages = Some(Stages {
                    k1,
                    k6,
                    k7,
                    k8,
                    k9,
                    k10,
                    k11,
                    k12,
                });
                self.dense = None;
                // the final step to t_stop lands exactly on it
                self.t = match t_stop {
                    Some(ts) if h == ts - self.t_old => ts,
                    _ => self.t_old + h,
                };
                self.y = y_new;
                self.f = f_new;
                self.h = h_new;
                return Ok(());
            }
            self.h = h / FAC_MIN.recip().min(fac11 / SAFE);
            self.last_rejected = true;
        }
    }

    fn shrink_for_domain(&mut self) -> Result<(), StepFailure> {
        self.h *= DOMAIN_SHRINK;
        self.last_rejected = true;
        if self.h.abs() <= 1e-12 * self.t.abs().max(1.0) {
            Err(StepFailure::LeftDomain)
        } else {
            Ok(())
        }
    }

    /// Continuous extension over the last accepted step. Costs three extra
    /// right-hand-side evaluations the first time it is requested.
    pub fn dense(&mut self) -> Result<DenseStep, StepFailure> {
        use coef::*;
        if let Some(d) = self.dense {
            return Ok(d);
        }
        let st = self.stages.ok_or(StepFailure::StepUnderflow)?;
        let h = self.h_old;
        let y0 = self.y_old;
        let kn = self.f;
        let ydiff = self.y - y0;
        let bspl = st.k1 * h - ydiff;
        let mut c = [Vec3::zeros(); 8];
        c[0] = y0;
        c[1] = ydiff;
        c[2] = bspl;
        c[3] = ydiff - kn * h - bspl;
        let d = |a1, a6, a7, a8, a9, a10, a11, a12| {
            st.k1 * a1
                + st.k6 * a6
                + st.k7 * a7
                + st.k8 * a8
                + st.k9 * a9
                + st.k10 * a10
                + st.k11 * a11
                + st.k12 * a12
        };
        c[4] = d(D41, D46, D47, D48, D49, D410, D411, D412);
        c[5] = d(D51, D56, D57, D58, D59, D510, D511, D512);
        c[6] = d(D61, D66, D67, D68, D69, D610, D611, D612);
        c[7] = d(D71, D76, D77, D78, D79, D710, D711, D712);

        let z14 = y0
            + (st.k1 * A141
                + st.k7 * A147
                + st.k8 * A148
                + st.k9 * A149
                + st.k10 * A1410
                + st.k11 * A1411
                + st.k12 * A1412
                + kn * A1413)
                * h;
        let k14 = self.eval(&z14).ok_or(StepFailure::LeftDomain)?;
        let z15 = y0
            + (st.k1 * A151
                + st.k6 * A156
                + st.k7 * A157
                + st.k8 * A158
                + st.k11 * A1511
                + st.k12 * A1512
                + kn * A1513
                + k14 * A1514)
                * h;
        let k15 = self.eval(&z15).ok_or(StepFailure::LeftDomain)?;
        let z16 = y0
            + (st.k1 * A161
                + st.k6 * A166
                + st.k7 * A167
                + st.k8 * A168
                + st.k9 * A169
                + kn * A1613
                + k14 * A1614
                + k15 * A1615)
                * h;
        let k16 = self.eval(&z16).ok_or(StepFailure::LeftDomain)?;

        c[4] = (c[4] + kn * D413 + k14 * D414 + k15 * D415 + k16 * D416) * h;
        c[5] = (c[5] + kn * D513 + k14 * D514 + k15 * D515 + k16 * D516) * h;
        c[6] = (c[6] + kn * D613 + k14 * D614 + k15 * D615 + k16 * D616) * h;
        c[7] = (c[7] + kn * D713 + k14 * D714 + k15 * D715 + k16 * D716) * h;

        let out = DenseStep {
            t0: self.t_old,
            h,
            c,
        };
        self.dense = Some(out);
        Ok(out)
    }
}

#[allow(dead_code, clippy::excessive_precision, clippy::unreadable_literal)]
mod coef {
    pub const A21: f64 = 5.26001519587677318785587544488E-2;
    pub const A31: f64 = 1.97250569845378994544595329183E-2;
    pub const A32: f64 = 5.91751709536136983633785987549E-2;
    pub const A41: f64 = 2.95875854768068491816892993775E-2;
    pub const A43: f64 = 8.87627564304205475450678981324E-2;
    pub const A51: f64 = 2.41365134159266685502369798665E-1;
    pub const A53: f64 = -8.84549479328286085344864962717E-1;
    pub const A54: f64 = 9.24834003261792003115737966543E-1;
    pub const A61: f64 = 3.7037037037037037037037037037E-2;
    pub const A64: f64 = 1.70828608729473871279604482173E-1;
    pub const A65: f64 = 1.25467687566822425016691814123E-1;
    pub const A71: f64 = 3.7109375E-2;
    pub const A74: f64 = 1.70252211019544039314978060272E-1;
    pub const A75: f64 = 6.02165389804559606850219397283E-2;
    pub const A76: f64 = -1.7578125E-2;
    pub const A81: f64 = 3.70920001185047927108779319836E-2;
    pub const A84: f64 = 1.70383925712239993810214054705E-1;
    pub const A85: f64 = 1.07262030446373284651809199168E-1;
    pub const A86: f64 = -1.53194377486244017527936158236E-2;
    pub const A87: f64 = 8.27378916381402288758473766002E-3;
    pub const A91: f64 = 6.24110958716075717114429577812E-1;
    pub const A94: f64 = -3.36089262944694129406857109825E0;
    pub const A95: f64 = -8.68219346841726006818189891453E-1;
    pub const A96: f64 = 2.75920996994467083049415600797E1;
    pub const A97: f64 = 2.01540675504778934086186788979E1;
    pub const A98: f64 = -4.34898841810699588477366255144E1;
    pub const A101: f64 = 4.77662536438264365890433908527E-1;
    pub const A104: f64 = -2.48811461997166764192642586468E0;
    pub const A105: f64 = -5.90290826836842996371446475743E-1;
    pub const A106: f64 = 2.12300514481811942347288949897E1;
    pub const A107: f64 = 1.52792336328824235832596922938E1;
    pub const A108: f64 = -3.32882109689848629194453265587E1;
    pub const A109: f64 = -2.03312017085086261358222928593E-2;
    pub const A111: f64 = -9.3714243008598732571704021658E-1;
    pub const A114: f64 = 5.18637242884406370830023853209E0;
    pub const A115: f64 = 1.09143734899672957818500254654E0;
    pub const A116: f64 = -8.14978701074692612513997267357E0;
    pub const A117: f64 = -1.85200656599969598641566180701E1;
    pub const A118: f64 = 2.27394870993505042818970056734E1;
    pub const A119: f64 = 2.49360555267965238987089396762E0;
    pub const A1110: f64 = -3.0467644718982195003823669022E0;
    pub const A121: f64 = 2.27331014751653820792359768449E0;
    pub const A124: f64 = -1.05344954667372501984066689879E1;
    pub const A125: f64 = -2.00087205822486249909675718444E0;
    pub const A126: f64 = -1.79589318631187989172765950534E1;
    pub const A127: f64 = 2.79488845294199600508499808837E1;
    pub const A128: f64 = -2.85899827713502369474065508674E0;
    pub const A129: f64 = -8.87285693353062954433549289258E0;
    pub const A1210: f64 = 1.23605671757943030647266201528E1;
    pub const A1211: f64 = 6.43392746015763530355970484046E-1;
    pub const A141: f64 = 5.61675022830479523392909219681E-2;
    pub const A147: f64 = 2.53500210216624811088794765333E-1;
    pub const A148: f64 = -2.46239037470802489917441475441E-1;
    pub const A149: f64 = -1.24191423263816360469010140626E-1;
    pub const A1410: f64 = 1.5329179827876569731206322685E-1;
    pub const A1411: f64 = 8.20105229563468988491666602057E-3;
    pub const A1412: f64 = 7.56789766054569976138603589584E-3;
    pub const A1413: f64 = -8.298E-3;
    pub const A151: f64 = 3.18346481635021405060768473261E-2;
    pub const A156: f64 = 2.83009096723667755288322961402E-2;
    pub const A157: f64 = 5.35419883074385676223797384372E-2;
    pub const A158: f64 = -5.49237485713909884646569340306E-2;
    pub const A1511: f64 = -1.08347328697249322858509316994E-4;
    pub const A1512: f64 = 3.82571090835658412954920192323E-4;
    pub const A1513: f64 = -3.40465008687404560802977114492E-4;
    pub const A1514: f64 = 1.41312443674632500278074618366E-1;
    pub const A161: f64 = -4.28896301583791923408573538692E-1;
    pub const A166: f64 = -4.69762141536116384314449447206E0;
    pub const A167: f64 = 7.68342119606259904184240953878E0;
    pub const A168: f64 = 4.06898981839711007970213554331E0;
    pub const A169: f64 = 3.56727187455281109270669543021E-1;
    pub const A1613: f64 = -1.39902416515901462129418009734E-3;
    pub const A1614: f64 = 2.9475147891527723389556272149E0;
    pub const A1615: f64 = -9.15095847217987001081870187138E0;
    pub const B1: f64 = 5.42937341165687622380535766363E-2;
    pub const B6: f64 = 4.45031289275240888144113950566E0;
    pub const B7: f64 = 1.89151789931450038304281599044E0;
    pub const B8: f64 = -5.8012039600105847814672114227E0;
    pub const B9: f64 = 3.1116436695781989440891606237E-1;
    pub const B10: f64 = -1.52160949662516078556178806805E-1;
    pub const B11: f64 = 2.01365400804030348374776537501E-1;
    pub const B12: f64 = 4.47106157277725905176885569043E-2;
    pub const BHH1: f64 = 0.244094488188976377952755905512E+00;
    pub const BHH2: f64 = 0.733846688281611857341361741547E+00;
    pub const BHH3: f64 = 0.220588235294117647058823529412E-01;
    pub const C2: f64 = 0.526001519587677318785587544488E-01;
    pub const C3: f64 = 0.789002279381515978178381316732E-01;
    pub const C4: f64 = 0.118350341907227396726757197510E+00;
    pub const C5: f64 = 0.281649658092772603273242802490E+00;
    pub const C6: f64 = 0.333333333333333333333333333333E+00;
    pub const C7: f64 = 0.25E+00;
    pub const C8: f64 = 0.307692307692307692307692307692E+00;
    pub const C9: f64 = 0.651282051282051282051282051282E+00;
    pub const C10: f64 = 0.6E+00;
    pub const C11: f64 = 0.857142857142857142857142857142E+00;
    pub const C14: f64 = 0.1E+00;
    pub const C15: f64 = 0.2E+00;
    pub const C16: f64 = 0.777777777777777777777777777778E+00;
    pub const ER1: f64 = 0.1312004499419488073250102996E-01;
    pub const ER6: f64 = -0.1225156446376204440720569753E+01;
    pub const ER7: f64 = -0.4957589496572501915214079952E+00;
    pub const ER8: f64 = 0.1664377182454986536961530415E+01;
    pub const ER9: f64 = -0.3503288487499736816886487290E+00;
    pub const ER10: f64 = 0.3341791187130174790297318841E+00;
    pub const ER11: f64 = 0.8192320648511571246570742613E-01;
    pub const ER12: f64 = -0.2235530786388629525884427845E-01;
    pub const D41: f64 = -0.84289382761090128651353491142E+01;
    pub const D46: f64 = 0.56671495351937776962531783590E+00;
    pub const D47: f64 = -0.30689499459498916912797304727E+01;
    pub const D48: f64 = 0.23846676565120698287728149680E+01;
    pub const D49: f64 = 0.21170345824450282767155149946E+01;
    pub const D410: f64 = -0.87139158377797299206789907490E+00;
    pub const D411: f64 = 0.22404374302607882758541771650E+01;
    pub const D412: f64 = 0.63157877876946881815570249290E+00;
    pub const D413: f64 = -0.88990336451333310820698117400E-01;
    pub const D414: f64 = 0.18148505520854727256656404962E+02;
    pub const D415: f64 = -0.91946323924783554000451984436E+01;
    pub const D416: f64 = -0.44360363875948939664310572000E+01;
    pub const D51: f64 = 0.10427508642579134603413151009E+02;
    pub const D56: f64 = 0.24228349177525818288430175319E+03;
    pub const D57: f64 = 0.16520045171727028198505394887E+03;
    pub const D58: f64 = -0.37454675472269020279518312152E+03;
    pub const D59: f64 = -0.22113666853125306036270938578E+02;
    pub const D510: f64 = 0.77334326684722638389603898808E+01;
    pub const D511: f64 = -0.30674084731089398182061213626E+02;
    pub const D512: f64 = -0.93321305264302278729567221706E+01;
    pub const D513: f64 = 0.15697238121770843886131091075E+02;
    pub const D514: f64 = -0.31139403219565177677282850411E+02;
    pub const D515: f64 = -0.93529243588444783865713862664E+01;
    pub const D516: f64 = 0.35816841486394083752465898540E+02;
    pub const D61: f64 = 0.19985053242002433820987653617E+02;
    pub const D66: f64 = -0.38703730874935176555105901742E+03;
    pub const D67: f64 = -0.18917813819516756882830838328E+03;
    pub const D68: f64 = 0.52780815920542364900561016686E+03;
    pub const D69: f64 = -0.11573902539959630126141871134E+02;
    pub const D610: f64 = 0.68812326946963000169666922661E+01;
    pub const D611: f64 = -0.10006050966910838403183860980E+01;
    pub const D612: f64 = 0.77771377980534432092869265740E+00;
    pub const D613: f64 = -0.27782057523535084065932004339E+01;
    pub const D614: f64 = -0.60196695231264120758267380846E+02;
    pub const D615: f64 = 0.84320405506677161018159903784E+02;
    pub const D616: f64 = 0.11992291136182789328035130030E+02;
    pub const D71: f64 = -0.25693933462703749003312586129E+02;
    pub const D76: f64 = -0.15418974869023643374053993627E+03;
    pub const D77: f64 = -0.23152937917604549567536039109E+03;
    pub const D78: f64 = 0.35763911791061412378285349910E+03;
    pub const D79: f64 = 0.93405324183624310003907691704E+02;
    pub const D710: f64 = -0.37458323136451633156875139351E+02;
    pub const D711: f64 = 0.10409964950896230045147246184E+03;
    pub const D712: f64 = 0.29840293426660503123344363579E+02;
    pub const D713: f64 = -0.43533456590011143754432175058E+02;
    pub const D714: f64 = 0.96324553959188282948394950600E+02;
    pub const D715: f64 = -0.39177261675615439165231486172E+02;
    pub const D716: f64 = -0.14972683625798562581422125276E+03;
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rotation(y: &Vec3) -> Option<Vec3> {
        Some(Vec3::new(-y.y, y.x, 0.1))
    }

    fn integrate_to<F: FnMut(&Vec3) -> Option<Vec3>>(s: &mut Dop853<F>, t_end: f64) {
        while (t_end - s.t()) * s.dir > 0.0 {
            s.step(Some(t_end)).unwrap();
        }
    }

    #[test]
    fn harmonic_rotation_is_accurate() {
        let tol = Tolerances::new(1e-12, 1e-14);
        let mut s = Dop853::new(rotation, 0.0, Vec3::new(1.0, 0.0, 0.0), 1.0, tol).unwrap();
        let t_end = 20.0;
        integrate_to(&mut s, t_end);
        assert_eq!(s.t(), t_end);
        let exact = Vec3::new(t_end.cos(), t_end.sin(), 0.1 * t_end);
        assert!((s.y() - exact).norm() < 1e-10, "{}", (s.y() - exact).norm());
    }

    #[test]
    fn backward_integration_returns() {
        let tol = Tolerances::new(1e-12, 1e-14);
        let y0 = Vec3::new(0.3, -0.7, 1.0);
        let mut s = Dop853::new(rotation, 0.0, y0, 1.0, tol).unwrap();
        integrate_to(&mut s, 7.0);
        let mut b = Dop853::new(rotation, 7.0, s.y(), -1.0, tol).unwrap();
        integrate_to(&mut b, 0.0);
        assert!((b.y() - y0).norm() < 1e-10);
    }

    #[test]
    fn dense_output_matches_exact_solution() {
        let tol = Tolerances::new(1e-11, 1e-13);
        let mut s = Dop853::new(rotation, 0.0, Vec3::new(1.0, 0.0, 0.0), 1.0, tol).unwrap();
        let mut worst: f64 = 0.0;
        for _ in 0..20 {
            s.step(None).unwrap();
            let d = s.dense().unwrap();
            assert_eq!(d.eval(d.t0), s.y_prev());
            assert!((d.eval(d.t1()) - s.y()).norm() < 1e-14);
            for j in 1..10 {
                let t = d.t0 + d.h * j as f64 / 10.0;
                let exact = Vec3::new(t.cos(), t.sin(), 0.1 * t);
                worst = worst.max((d.eval(t) - exact).norm());
            }
        }
        assert!(worst < 1e-9, "dense error {worst}");
    }

    #[test]
    fn domain_exit_is_reported() {
        let tol = Tolerances::default();
        let rhs = |y: &Vec3| (y.x < 2.0).then(|| Vec3::new(1.0, 0.0, 0.0));
        let mut s = Dop853::new(rhs, 0.0, Vec3::zeros(), 1.0, tol).unwrap();
        let mut status = Ok(());
        for _ in 0..10_000 {
            status = s.step(None);
            if status.is_err() {
                break;
            }
        }
        assert_eq!(status, Err(StepFailure::LeftDomain));
        assert!(s.y().x < 2.0 && s.y().x > 1.9);
    }

    #[test]
    fn exponential_growth_matches() {
        let tol = Tolerances::new(1e-12, 1e-14);
        let mut s = Dop853::new(
            |y: &Vec3| Some(*y),
            0.0,
            Vec3::new(1.0, 2.0, -1.0),
            1.0,
            tol,
        )
        .unwrap();
        integrate_to(&mut s, 3.0);
        let e = 3.0f64.exp();
        assert!((s.y() - Vec3::new(e, 2.0 * e, -e)).norm() / e < 1e-11);
    }
}
