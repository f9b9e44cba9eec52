//! Covers of `[-1,1]^2` by parallelograms on which a polynomial has dyadic size,
//! and covers of thin sublevel sets `{|P| < δ}` around a regular zero curve.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::dyadic;
use crate::enclosure::{bernstein_bound, range_enclosure, RangeEnclosure};
use crate::error::{Error, Result};
use crate::geometry::{norm, Parallelogram};
use crate::poly::Poly2;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum SizeCase {
    /// `|P| ∼ σ` on the double, width at least `max(σ, 1/R)`.
    #[serde(rename = "a")]
    A,
    /// `|P| ≲ σ` on the double, width `∼ 1/R`.
    #[serde(rename = "b")]
    B,
    /// `|P| ≲ R^{-6}`.
    #[serde(rename = "c")]
    C,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoverPiece {
    #[serde(flatten)]
    pub parallelogram: Parallelogram,
    pub case: SizeCase,
}

/// Families of pieces keyed by the exponent `k` of `σ = 2^{-k}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SublevelCover {
    #[serde(rename = "R")]
    pub r: f64,
    pub eps: f64,
    #[serde(rename = "P")]
    pub source: Poly2,
    /// Power of two `>= max(1, ||P||)`; the `a`-case width bound uses `σ / scale`.
    pub scale: f64,
    pub slack: f64,
    #[serde(with = "sigma_map")]
    pub families: BTreeMap<i32, Vec<CoverPiece>>,
}

/// Serialises `k -> v` maps with the decimal value of `2^{-k}` as the key, in order of decreasing σ.
pub mod sigma_map {
    use std::collections::BTreeMap;

    use serde::de::{DeserializeOwned, MapAccess, Visitor};
    use serde::ser::SerializeMap;
    use serde::{Deserializer, Serialize, Serializer};

    pub fn serialize<V: Serialize, S: Serializer>(m: &BTreeMap<i32, V>, s: S) -> Result<S::Ok, S::Error> {
        let mut map = s.serialize_map(Some(m.len()))?;
        for (k, v) in m {
            map.serialize_entry(&format!("{}", crate::dyadic::value(*k)), v)?;
        }
        map.end()
    }

    struct V<T>(std::marker::PhantomData<T>);

    impl<'de, T: DeserializeOwned> Visitor<'de> for V<T> {
        type Value = BTreeMap<i32, T>;
        fn expecting(&self, f: &mut std::fmt::Formatter) -> std::fmt::Result {
            write!(f, "a map keyed by dyadic sigma")
        }
        fn visit_map<A: MapAccess<'de>>(self, mut a: A) -> Result<Self::Value, A::Error> {
            let mut out = BTreeMap::new();
            while let Some((k, v)) = a.next_entry::<String, T>()? {
                let sigma: f64 = k.parse().map_err(serde::de::Error::custom)?;
                if !(sigma > 0.0) {
                    return Err(serde::de::Error::custom(format!("bad sigma {k}")));
                }
                out.insert(crate::dyadic::nearest(sigma), v);
            }
            Ok(out)
        }
    }

    pub fn deserialize<'de, T: DeserializeOwned, D: Deserializer<'de>>(d: D) -> Result<BTreeMap<i32, T>, D::Error> {
        d.deserialize_map(V(std::marker::PhantomData))
    }
}

impl SublevelCover {
    pub fn pieces(&self) -> impl Iterator<Item = (i32, &CoverPiece)> {
        self.families
            .iter()
            .flat_map(|(&k, v)| v.iter().map(move |p| (k, p)))
    }

    pub fn all_parallelograms(&self) -> Vec<Parallelogram> {
        self.pieces().map(|(_, p)| p.parallelogram).collect()
    }

    pub fn len(&self) -> usize {
        self.families.values().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Exponent of the tiny family `σ ∼ R^{-6}`.
    pub fn tiny_k(&self) -> i32 {
        tiny_k(self.r)
    }
}

pub fn tiny_k(r: f64) -> i32 {
    dyadic::floor(r.powi(-6))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SublevelOptions {
    /// `C` in `σ/C <= |P| <= Cσ`.
    pub slack: f64,
    /// Merge neighbouring pieces of the same family when the window survives.
    pub merge: bool,
    /// Axis-aligned square `[x0, x1, y0, y1]` to cover.
    pub domain: [f64; 4],
}

impl Default for SublevelOptions {
    fn default() -> Self {
        Self {
            slack: 8.0,
            merge: true,
            domain: [-1.0, 1.0, -1.0, 1.0],
        }
    }
}

fn certified_abs(p: &Poly2, q: &Parallelogram) -> RangeEnclosure {
    bernstein_bound(p, q).abs()
}

fn refined_abs(p: &Poly2, q: &Parallelogram, rough: RangeEnclosure) -> RangeEnclosure {
    if rough.upper == 0.0 {
        return rough;
    }
    match range_enclosure(p, q, 0.02 * rough.upper) {
        Ok(r) => r.abs(),
        Err(_) => rough,
    }
}

struct Ctx<'a> {
    p: &'a Poly2,
    r: f64,
    scale: f64,
    slack: f64,
    tiny_k: i32,
}

type Rect = [f64; 4];

fn rect_par(r: &Rect) -> Parallelogram {
    Parallelogram::from_rect(r[0], r[1], r[2], r[3])
}

impl Ctx<'_> {
    fn classify_range(&self, rg: &RangeEnclosure, h: f64, can_split: bool) -> Option<(i32, SizeCase)> {
        let c = self.slack;
        let (lo, hi) = (rg.lower, rg.upper);
        if hi <= c * dyadic::value(self.tiny_k) {
            return Some((self.tiny_k, SizeCase::C));
        }
        if lo > 0.0 && 2.0 * h >= 0.5 / self.r {
            // Admissible σ: hi/C <= σ <= C lo, and σ/scale <= 4h for the width bound.
            let top = (c * lo).min(4.0 * h * self.scale);
            let k = dyadic::nearest((lo * hi).sqrt())
                .max(dyadic::floor(top))
                .min(dyadic::ceil(hi / c))
                .min(self.tiny_k);
            let s = dyadic::value(k);
            if hi <= c * s && lo >= s / c && 2.0 * h >= 0.5 * (s / self.scale).max(1.0 / self.r) {
                return Some((k, SizeCase::A));
            }
        }
        if can_split {
            return None;
        }
        let k = dyadic::ceil(hi / c).min(self.tiny_k);
        Some((k, SizeCase::B))
    }

    fn classify(&self, rect: &Rect) -> Option<(i32, SizeCase)> {
        let h = 0.5 * (rect[1] - rect[0]);
        let can_split = h >= 1.0 / self.r;
        let two = rect_par(rect).dilate(2.0);
        let rough = certified_abs(self.p, &two);
        if let Some(v) = self.classify_range(&rough, h, true) {
            return Some(v);
        }
        let fine = refined_abs(self.p, &two, rough);
        self.classify_range(&fine, h, can_split)
    }

    fn window_ok(&self, rect: &Rect, k: i32, case: SizeCase) -> bool {
        self.piece_ok(&rect_par(rect), k, case)
    }

    /// Size-case test for an arbitrary parallelogram, certified on its double.
    fn piece_ok(&self, par: &Parallelogram, k: i32, case: SizeCase) -> bool {
        let c = self.slack;
        let s = dyadic::value(k);
        let w = par.w();
        match case {
            SizeCase::A if w < 0.5 * (s / self.scale).max(1.0 / self.r) => return false,
            SizeCase::B if w > 4.0 / self.r => return false,
            _ => {}
        }
        let two = par.dilate(2.0);
        let test = |g: &RangeEnclosure| match case {
            SizeCase::A => g.upper <= c * s && g.lower >= s / c,
            SizeCase::B => g.upper <= c * s,
            SizeCase::C => g.upper <= c * dyadic::value(self.tiny_k),
        };
        let rough = certified_abs(self.p, &two);
        test(&rough) || test(&refined_abs(self.p, &two, rough))
    }

    /// Greedy merge of touching rectangles sharing the cross-section along one axis.
    fn merge_axis(&self, leaves: Vec<(Rect, i32, SizeCase)>, vertical: bool) -> Vec<(Rect, i32, SizeCase)> {
        let (a0, a1, b0, b1) = if vertical { (0, 1, 2, 3) } else { (2, 3, 0, 1) };
        let mut groups: BTreeMap<(u64, u64, i32, SizeCase), Vec<Rect>> = BTreeMap::new();
        for (r, k, c) in leaves {
            groups
                .entry((r[a0].to_bits(), r[a1].to_bits(), k, c))
                .or_default()
                .push(r);
        }
        let mut out = Vec::new();
        for ((_, _, k, case), mut rs) in groups {
            rs.sort_by(|x, y| x[b0].total_cmp(&y[b0]));
            let mut cur = rs[0];
            for r in rs.into_iter().skip(1) {
                if r[b0] == cur[b1] {
                    let mut m = cur;
                    m[b1] = r[b1];
                    if self.window_ok(&m, k, case) {
                        cur = m;
                        continue;
                    }
                }
                out.push((cur, k, case));
                cur = r;
            }
            out.push((cur, k, case));
        }
        out
    }
}

/// Pieces with a dyadic exponent and a size case.
pub type Tagged = (Parallelogram, i32, SizeCase);

/// Index pairs of pieces whose bounding boxes touch.
fn touching(pieces: &[Tagged]) -> Vec<Vec<usize>> {
    let boxes: Vec<[f64; 4]> = pieces.iter().map(|p| p.0.bbox()).collect();
    let mut order: Vec<usize> = (0..pieces.len()).collect();
    order.sort_by(|&a, &b| boxes[a][0].total_cmp(&boxes[b][0]));
    let mut adj = vec![Vec::new(); pieces.len()];
    let tol = 1e-12;
    for (n, &i) in order.iter().enumerate() {
        for &j in &order[n + 1..] {
            if boxes[j][0] > boxes[i][1] + tol {
                break;
            }
            if boxes[j][2] <= boxes[i][3] + tol && boxes[i][2] <= boxes[j][3] + tol {
                adj[i].push(j);
                adj[j].push(i);
            }
        }
    }
    for a in &mut adj {
        a.sort_unstable();
    }
    adj
}

/// Greedily grows clusters of touching pieces of the same case, replacing each cluster by
/// the minimum-area rectangle containing it whenever `ok(rect, k, case)` accepts one of the
/// members' exponents.
pub fn agglomerate<F: Fn(&Parallelogram, i32, SizeCase) -> bool>(pieces: Vec<Tagged>, ok: F) -> Vec<Tagged> {
    let adj = touching(&pieces);
    let mut used = vec![false; pieces.len()];
    let mut out = Vec::new();
    for seed in 0..pieces.len() {
        if used[seed] {
            continue;
        }
        used[seed] = true;
        let (mut rect, mut k, case) = pieces[seed];
        let mut frontier: std::collections::VecDeque<usize> = adj[seed].iter().copied().collect();
        let mut tried = std::collections::HashSet::new();
        while let Some(j) = frontier.pop_front() {
            if used[j] || pieces[j].2 != case || !tried.insert(j) {
                continue;
            }
            let mut pts = rect.vertices().to_vec();
            pts.extend_from_slice(&pieces[j].0.vertices());
            let Some(m) = crate::geometry::min_area_rect(&pts) else {
                continue;
            };
            let kj = pieces[j].1;
            let pick = [k, kj, k.min(kj)]
                .into_iter()
                .enumerate()
                .find(|&(n, kk)| (n == 0 || kk != k) && ok(&m, kk, case))
                .map(|(_, kk)| kk);
            if let Some(kk) = pick {
                rect = m;
                k = kk;
                used[j] = true;
                frontier.extend(adj[j].iter().copied().filter(|&x| !used[x]));
            }
        }
        out.push((rect, k, case));
    }
    out
}

/// Power of two `>= max(1, ||P||)`.
pub fn scale_for(p: &Poly2) -> f64 {
    let n = p.coeff_norm();
    if n <= 1.0 {
        1.0
    } else {
        2f64.powi(n.log2().ceil() as i32)
    }
}

/// [`sublevel_cover_with`] with default options.
pub fn sublevel_cover(p: &Poly2, r: f64, eps: f64) -> Result<SublevelCover> {
    sublevel_cover_with(p, r, eps, &SublevelOptions::default())
}

/// Quadtree cover of `[-1,1]^2` sorted into dyadic families `P_σ` with size cases (a)/(b)/(c).
///
/// A square is accepted when the certified range of `|P|` on its double fits one of the
/// cases; otherwise it is split until its half-side drops below `1/R`, where case (b) is
/// forced. Accepted squares of one family are then merged along columns and rows while
/// the window still holds on the merged double.
pub fn sublevel_cover_with(p: &Poly2, r: f64, eps: f64, opts: &SublevelOptions) -> Result<SublevelCover> {
    if !(r >= 1.0) {
        return Err(Error::InvalidArgument(format!("R must be at least 1, got {r}")));
    }
    if !(opts.slack > 1.0) {
        return Err(Error::InvalidArgument(format!("slack must exceed 1, got {}", opts.slack)));
    }
    let ctx = Ctx {
        p,
        r,
        scale: scale_for(p),
        slack: opts.slack,
        tiny_k: tiny_k(r),
    };
    let side = (opts.domain[1] - opts.domain[0]).max(opts.domain[3] - opts.domain[2]);
    let max_depth = ((r * side).log2().ceil().max(0.0) as usize) + 2;
    let mut leaves = Vec::new();
    let mut stack: Vec<(Rect, usize)> = vec![(opts.domain, 0)];
    while let Some((rect, depth)) = stack.pop() {
        if depth > max_depth {
            return Err(Error::RecursionDepthExceeded(depth));
        }
        match ctx.classify(&rect) {
            Some((k, case)) => leaves.push((rect, k, case)),
            None => {
                let xm = 0.5 * (rect[0] + rect[1]);
                let ym = 0.5 * (rect[2] + rect[3]);
                for q in [
                    [rect[0], xm, rect[2], ym],
                    [xm, rect[1], rect[2], ym],
                    [rect[0], xm, ym, rect[3]],
                    [xm, rect[1], ym, rect[3]],
                ] {
                    stack.push((q, depth + 1));
                }
            }
        }
    }
    if opts.merge {
        leaves = ctx.merge_axis(leaves, true);
        leaves = ctx.merge_axis(leaves, false);
    }
    let mut tagged: Vec<Tagged> = leaves.into_iter().map(|(r, k, c)| (rect_par(&r), k, c)).collect();
    if opts.merge {
        tagged = agglomerate(tagged, |p, k, c| ctx.piece_ok(p, k, c));
    }
    let mut families: BTreeMap<i32, Vec<CoverPiece>> = BTreeMap::new();
    for (parallelogram, k, case) in tagged {
        families.entry(k).or_default().push(CoverPiece { parallelogram, case });
    }
    for v in families.values_mut() {
        v.sort_by(|a, b| {
            let (ca, cb) = (a.parallelogram.center(), b.parallelogram.center());
            ca[0].total_cmp(&cb[0]).then(ca[1].total_cmp(&cb[1]))
        });
    }
    Ok(SublevelCover {
        r,
        eps,
        source: p.clone(),
        scale: ctx.scale,
        slack: opts.slack,
        families,
    })
}

/// Checks the size-case bounds of every piece: the dyadic window on the double and
/// the width bounds. Returns a description of each violation.
pub fn check_size_cases(cover: &SublevelCover) -> Vec<String> {
    let mut bad = Vec::new();
    let r = cover.r;
    let c = cover.slack;
    let tiny = dyadic::value(cover.tiny_k());
    for (k, piece) in cover.pieces() {
        let s = dyadic::value(k);
        let par = &piece.parallelogram;
        let w = par.w();
        let two = par.dilate(2.0);
        let rough = certified_abs(&cover.source, &two);
        let g = refined_abs(&cover.source, &two, rough);
        let ok = match piece.case {
            SizeCase::A => {
                g.upper <= c * s && g.lower >= s / c && w >= 0.5 * (s / cover.scale).max(1.0 / r) * (1.0 - 1e-12)
            }
            SizeCase::B => g.upper <= c * s && w >= 0.25 / r && w <= 4.0 / r,
            SizeCase::C => g.upper <= c * tiny && w >= 0.5 / r * (1.0 - 1e-12),
        };
        if !ok {
            bad.push(format!(
                "sigma=2^-{k} case={:?} width={w:e} |P| in [{:e}, {:e}] at {:?}",
                piece.case,
                g.lower,
                g.upper,
                par.center()
            ));
        }
    }
    bad
}

fn grad(px: &Poly2, py: &Poly2, x: [f64; 2]) -> [f64; 2] {
    [px.eval(x), py.eval(x)]
}

fn project(p: &Poly2, px: &Poly2, py: &Poly2, mut x: [f64; 2], tol: f64) -> Option<[f64; 2]> {
    for _ in 0..30 {
        let v = p.eval(x);
        if v.abs() <= tol {
            return Some(x);
        }
        let g = grad(px, py, x);
        let gg = g[0] * g[0] + g[1] * g[1];
        if gg == 0.0 {
            return None;
        }
        x = [x[0] - v * g[0] / gg, x[1] - v * g[1] / gg];
    }
    (p.eval(x).abs() <= 1e3 * tol).then_some(x)
}

/// Rectangles covering `{ξ ∈ Ω₀ : |P(ξ)| < δ}` when `|∇P| ∈ [κ/2, 2κ]` on `2Ω₀`.
///
/// The zero curve is traced by predictor-corrector continuation from sign changes on a
/// seed grid of step `δ/(4κ)`. Each trace point carries a tangent-aligned rectangle of
/// half-lengths `2h/3` along the curve and `2δ/κ` across it, `h = δ/κ` being the step.
pub fn zero_nbhd_cover(p: &Poly2, omega0: &Parallelogram, delta: f64, kappa: f64) -> Result<Vec<Parallelogram>> {
    if !(delta > 0.0 && kappa > 0.0) {
        return Err(Error::InvalidArgument("delta and kappa must be positive".into()));
    }
    let px = p.derivative(1, 0);
    let py = p.derivative(0, 1);
    let g2 = &(&px * &px) + &(&py * &py);
    let two = omega0.dilate(2.0);
    let gr = range_enclosure(&g2, &two, 1e-4 * g2.l1_norm().max(1e-300))?;
    let (glo, ghi) = (gr.lower.max(0.0).sqrt(), gr.upper.max(0.0).sqrt());
    if glo < kappa / 2.0 || ghi > 2.0 * kappa {
        return Err(Error::GradientHypothesisFails {
            lower: glo,
            upper: ghi,
            kappa_lo: kappa / 2.0,
            kappa_hi: 2.0 * kappa,
        });
    }
    let w0 = omega0.width()?;
    if w0 < delta / kappa {
        return Err(Error::PreconditionFails(format!(
            "width {w0:e} below delta/kappa = {:e}",
            delta / kappa
        )));
    }

    let h = delta / kappa;
    let normal_half = 2.0 * delta / kappa;
    let dil = (1.0 + 2.0 * normal_half / w0).min(2.0);
    let seed_region = omega0.dilate(dil);
    let tol = 1e-13 * p.l1_norm().max(1e-300);

    // Seeds: sign changes along the edges of a grid on the enlarged region.
    let step = h / 4.0;
    let n1 = ((2.0 * norm(seed_region.u())) / step).ceil().clamp(2.0, 4096.0) as usize;
    let n2 = ((2.0 * norm(seed_region.v())) / step).ceil().clamp(2.0, 4096.0) as usize;
    let at = |i: usize, j: usize| {
        seed_region.map.apply([
            -1.0 + 2.0 * i as f64 / n1 as f64,
            -1.0 + 2.0 * j as f64 / n2 as f64,
        ])
    };
    let mut vals = vec![0.0; (n1 + 1) * (n2 + 1)];
    for i in 0..=n1 {
        for j in 0..=n2 {
            vals[i * (n2 + 1) + j] = p.eval(at(i, j));
        }
    }
    let mut seeds = Vec::new();
    for i in 0..=n1 {
        for j in 0..=n2 {
            let v = vals[i * (n2 + 1) + j];
            for (di, dj) in [(1usize, 0usize), (0, 1)] {
                let (ii, jj) = (i + di, j + dj);
                if ii > n1 || jj > n2 {
                    continue;
                }
                let w = vals[ii * (n2 + 1) + jj];
                if v == 0.0 || v * w < 0.0 {
                    let (a, b) = (at(i, j), at(ii, jj));
                    let t = if v == w { 0.0 } else { v / (v - w) };
                    seeds.push([a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])]);
                }
            }
        }
    }

    let mut seen: HashMap<(i64, i64), Vec<[f64; 2]>> = HashMap::new();
    let cell = |x: [f64; 2]| ((x[0] / h).floor() as i64, (x[1] / h).floor() as i64);
    let near_seen = |seen: &HashMap<(i64, i64), Vec<[f64; 2]>>, x: [f64; 2]| {
        let (ci, cj) = cell(x);
        for di in -1..=1 {
            for dj in -1..=1 {
                if let Some(v) = seen.get(&(ci + di, cj + dj)) {
                    if v.iter().any(|y| norm([y[0] - x[0], y[1] - x[1]]) < h) {
                        return true;
                    }
                }
            }
        }
        false
    };
    let inside = |x: [f64; 2]| {
        let s = seed_region.local(x);
        s[0].abs() <= 1.0 + 1e-9 && s[1].abs() <= 1.0 + 1e-9
    };
    let max_steps = (4.0 * (omega0.length() * 8.0 + 8.0) / h).ceil() as usize + 16;

    let mut out = Vec::new();
    let push_rect = |x: [f64; 2], out: &mut Vec<Parallelogram>| {
        let g = grad(&px, &py, x);
        let gn = norm(g);
        let t = [-g[1] / gn, g[0] / gn];
        out.push(Parallelogram::oriented_rect(x, t, 2.0 * h / 3.0, normal_half));
    };

    for s in seeds {
        let Some(x0) = project(p, &px, &py, s, tol) else {
            continue;
        };
        if !inside(x0) || near_seen(&seen, x0) {
            continue;
        }
        seen.entry(cell(x0)).or_default().push(x0);
        push_rect(x0, &mut out);
        let mut closed = false;
        for sign in [1.0, -1.0] {
            if closed {
                break;
            }
            let mut x = x0;
            for n in 0..max_steps {
                let g = grad(&px, &py, x);
                let gn = norm(g);
                let t = [-sign * g[1] / gn, sign * g[0] / gn];
                let mut hh = h;
                let mut next = None;
                for _ in 0..6 {
                    if let Some(y) = project(p, &px, &py, [x[0] + hh * t[0], x[1] + hh * t[1]], tol) {
                        if norm([y[0] - x[0], y[1] - x[1]]) <= 1.5 * hh {
                            next = Some(y);
                            break;
                        }
                    }
                    hh *= 0.5;
                }
                let Some(y) = next else { break };
                push_rect(y, &mut out);
                seen.entry(cell(y)).or_default().push(y);
                if !inside(y) {
                    break;
                }
                if n > 2 && norm([y[0] - x0[0], y[1] - x0[1]]) < 0.75 * h {
                    closed = true;
                    break;
                }
                x = y;
            }
        }
    }

    if out.is_empty() {
        let r = range_enclosure(p, omega0, 1e-3 * delta)?.abs();
        if r.lower < delta {
            out.push(*omega0);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{max_dilate_overlap, uncovered_on_grid};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn covers_sublevel(p: &Poly2, omega0: &Parallelogram, delta: f64, rects: &[Parallelogram], seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut hits = 0;
        while hits < 10_000 {
            let s = [rng.gen_range(-1.0..=1.0), rng.gen_range(-1.0..=1.0)];
            let x = omega0.map.apply(s);
            // Rejection sampling near the zero set keeps the test fast.
            if p.eval(x).abs() >= delta {
                continue;
            }
            hits += 1;
            assert!(
                rects.iter().any(|r| r.contains(x).unwrap()),
                "uncovered sublevel point {x:?}"
            );
        }
    }

    #[test]
    fn horizontal_axis() {
        let p = Poly2::x2();
        let sq = Parallelogram::unit_square();
        let rects = zero_nbhd_cover(&p, &sq, 0.1, 1.0).unwrap();
        covers_sublevel(&p, &sq, 0.1, &rects, 1);
        for r in &rects {
            let w = r.width().unwrap();
            assert!(w >= 0.1 && w <= 0.4 + 1e-12, "{w}");
        }
        assert!(max_dilate_overlap(&rects, 1.0, 200) <= 3);
    }

    #[test]
    fn diagonal_line() {
        let p = Poly2::from_terms(1, [(1, 0, 1.0), (0, 1, 1.0)]);
        let sq = Parallelogram::unit_square();
        let rects = zero_nbhd_cover(&p, &sq, 0.1, 1.0).unwrap();
        covers_sublevel(&p, &sq, 0.1, &rects, 2);
        for r in &rects {
            let u = r.u();
            assert!((u[0] + u[1]).abs() < 1e-12, "not aligned with the zero line");
        }
    }

    #[test]
    fn parabola() {
        let p = Poly2::from_terms(2, [(0, 1, 1.0), (2, 0, -1.0)]);
        let sq = Parallelogram::from_rect(-0.5, 0.5, -0.5, 0.5);
        let rects = zero_nbhd_cover(&p, &sq, 0.05, 1.2).unwrap();
        covers_sublevel(&p, &sq, 0.05, &rects, 3);
        for r in &rects {
            // Normal extent follows the local gradient.
            assert!(p.eval(r.center()).abs() < 1e-10);
        }
    }

    #[test]
    fn gradient_hypothesis() {
        let p = Poly2::from_terms(2, [(0, 1, 1.0), (2, 0, -1.0)]);
        let e = zero_nbhd_cover(&p, &Parallelogram::unit_square(), 0.05, 1.0).unwrap_err();
        assert!(matches!(e, Error::GradientHypothesisFails { .. }));
    }

    #[test]
    fn no_zero_curve() {
        let p = &Poly2::x2() - &Poly2::constant(1.05);
        let sq = Parallelogram::unit_square();
        let rects = zero_nbhd_cover(&p, &sq, 0.1, 1.0).unwrap();
        covers_sublevel(&p, &sq, 0.1, &rects, 4);
        let far = &Poly2::x2() - &Poly2::constant(3.0);
        assert!(zero_nbhd_cover(&far, &sq, 0.1, 1.0).unwrap().is_empty());
    }

    #[test]
    fn constant_base_case() {
        let c = sublevel_cover(&Poly2::constant(0.5), 64.0, 0.1).unwrap();
        assert_eq!(c.families.len(), 1);
        let fam = &c.families[&1];
        assert_eq!(fam.len(), 1);
        assert_eq!(fam[0].parallelogram, Parallelogram::unit_square());
        assert_eq!(fam[0].case, SizeCase::A);

        let c = sublevel_cover(&Poly2::constant(-1.0), 64.0, 0.1).unwrap();
        assert_eq!(c.families.keys().copied().collect::<Vec<_>>(), vec![0]);
        assert_eq!(c.families[&0].len(), 1);
    }

    #[test]
    fn linear_strips() {
        let r = 64.0;
        let c = sublevel_cover(&Poly2::x1(), r, 0.1).unwrap();
        assert_eq!(uncovered_on_grid(&c.all_parallelograms(), 200), 0);
        assert!(check_size_cases(&c).is_empty(), "{:?}", check_size_cases(&c));
        for (k, piece) in c.pieces() {
            let s = dyadic::value(k);
            let par = &piece.parallelogram;
            // Column merging turns everything into vertical strips.
            assert!(par.bbox()[2] == -1.0 && par.bbox()[3] == 1.0, "{:?}", par.bbox());
            match piece.case {
                SizeCase::A => {
                    let x = par.center()[0].abs();
                    assert!(x >= s / 8.0 && x <= 8.0 * s);
                }
                SizeCase::B | SizeCase::C => assert!(par.w() <= 4.0 / r),
            }
        }
        assert!(max_dilate_overlap(&c.all_parallelograms(), 100.0, 200) <= 64);
    }

    #[test]
    fn json_shape() {
        let c = sublevel_cover(&Poly2::constant(0.5), 4.0, 0.1).unwrap();
        let s = serde_json::to_string(&c).unwrap();
        assert!(s.contains(r#""families":{"0.5":[{"L":[[1.0,0.0],[0.0,1.0]],"b":[0.0,0.0],"case":"a"}]}"#), "{s}");
        let back: SublevelCover = serde_json::from_str(&s).unwrap();
        assert_eq!(back, c);
    }
}
