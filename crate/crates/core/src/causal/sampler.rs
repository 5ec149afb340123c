//! Seeded random instances of the factor model.

use rand::seq::SliceRandom;
use rand::Rng;

use super::pattern::{S_STAR, S_TILDE};
use super::scm::{decode, DiscreteSCM};

/// Strictly positive random conditional table.
fn random_table(rng: &mut impl Rng, rows: usize, card: usize) -> Vec<f64> {
    let mut t = Vec::with_capacity(rows * card);
    for _ in 0..rows {
        let raw: Vec<f64> = (0..card).map(|_| rng.random_range(0.05..1.0)).collect();
        let s: f64 = raw.iter().sum();
        t.extend(raw.into_iter().map(|v| v / s));
    }
    t
}

/// Table of `map(parent config)` with probability `1 − eta`, the rest of
/// the mass spread evenly over the other values.
fn flip_table(map: &[usize], card: usize, eta: f64) -> Vec<f64> {
    let mut t = vec![eta / (card - 1) as f64; map.len() * card];
    for (r, &v) in map.iter().enumerate() {
        t[r * card + v] = 1.0 - eta;
    }
    t
}

/// A map from parent configurations to `0..card` that is onto and changes
/// value when any single parent changes for at least one configuration.
fn sensitive_map(rng: &mut impl Rng, parent_cards: &[usize], card: usize) -> Vec<usize> {
    let rows: usize = parent_cards.iter().product();
    loop {
        let mut map: Vec<usize> = (0..rows).map(|r| r % card).collect();
        map.shuffle(rng);
        let onto = (0..card.min(rows)).all(|v| map.contains(&v));
        let sensitive = (0..parent_cards.len()).all(|p| {
            (0..rows).any(|r| {
                let digits = decode(r, parent_cards);
                (0..parent_cards[p]).any(|alt| {
                    let mut d = digits.clone();
                    d[p] = alt;
                    let r2 = d
                        .iter()
                        .zip(parent_cards)
                        .fold(0, |acc, (&x, &c)| acc * c + x);
                    map[r2] != map[r]
                })
            })
        });
        if onto && sensitive {
            return map;
        }
    }
}

fn add_factor_roots(scm: &mut DiscreteSCM, rng: &mut impl Rng, s_card: usize, star_card: usize) {
    if rng.random_bool(0.5) {
        scm.add("L", 2, &[], random_table(rng, 1, 2)).unwrap();
        scm.set_latent("L").unwrap();
        scm.add(S_TILDE, s_card, &["L"], random_table(rng, 2, s_card))
            .unwrap();
        scm.add(S_STAR, star_card, &["L"], random_table(rng, 2, star_card))
            .unwrap();
    } else {
        scm.add(S_TILDE, s_card, &[], random_table(rng, 1, s_card))
            .unwrap();
        scm.add(S_STAR, star_card, &[], random_table(rng, 1, star_card))
            .unwrap();
    }
}

/// Random factor model with noisy conditionals and `G = (X, C)` exactly.
pub fn random_bound_scm(rng: &mut impl Rng) -> DiscreteSCM {
    let mut scm = DiscreteSCM::new();
    let (s, star, x, c) = (
        rng.random_range(2..=3),
        rng.random_range(2..=3),
        rng.random_range(2..=3),
        rng.random_range(2..=3),
    );
    add_factor_roots(&mut scm, rng, s, star);
    scm.add("X", x, &[S_STAR, S_TILDE], random_table(rng, s * star, x))
        .unwrap();
    scm.add("C", c, &[], random_table(rng, 1, c)).unwrap();
    scm.add_deterministic("G", x * c, &["X", "C"], |v| v[0] * c + v[1])
        .unwrap();
    let r = rng.random_range(2..=4);
    scm.add("R", r, &["G"], random_table(rng, x * c, r))
        .unwrap();
    let tt = rng.random_range(2..=3);
    scm.add("T~", tt, &["G"], random_table(rng, x * c, tt))
        .unwrap();
    let t = rng.random_range(2..=3);
    scm.add("T", t, &["R"], random_table(rng, r, t)).unwrap();
    scm
}

/// Random factor model in which the expert reads `X` off `G`, the
/// representation is a noisy bijection of `(X, C)` and `T` recovers `X`
/// from it, so `p(t|s~) = p(t~|s~)`.
pub fn random_sandwich_scm(rng: &mut impl Rng) -> DiscreteSCM {
    let mut scm = DiscreteSCM::new();
    let (s, star, x, c) = (
        rng.random_range(2..=3),
        rng.random_range(2..=3),
        rng.random_range(2..=3),
        rng.random_range(2..=3),
    );
    add_factor_roots(&mut scm, rng, s, star);
    scm.add("X", x, &[S_STAR, S_TILDE], random_table(rng, s * star, x))
        .unwrap();
    scm.add("C", c, &[], random_table(rng, 1, c)).unwrap();
    scm.add_deterministic("G", x * c, &["X", "C"], |v| v[0] * c + v[1])
        .unwrap();
    scm.add_deterministic("T~", x, &["G"], |v| v[0] / c)
        .unwrap();
    // R = perm(x, c') where c' is c after a random flip
    let mut perm: Vec<usize> = (0..x * c).collect();
    perm.shuffle(rng);
    let eta = rng.random_range(0.05..0.2);
    let mut table = vec![0.0; x * c * x * c];
    for g in 0..x * c {
        let (gx, gc) = (g / c, g % c);
        for cc in 0..c {
            let p = if cc == gc {
                1.0 - eta
            } else {
                eta / (c - 1) as f64
            };
            table[g * x * c + perm[gx * c + cc]] += p;
        }
    }
    scm.add("R", x * c, &["G"], table).unwrap();
    let mut inverse = vec![0; x * c];
    for (i, &p) in perm.iter().enumerate() {
        inverse[p] = i;
    }
    scm.add_deterministic("T", x, &["R"], |v| inverse[v[0]] / c)
        .unwrap();
    scm
}

/// Faithful factor model for discovery: every equation is a sensitive map
/// with flip noise, and `S~`, `S*` share a latent parent. Children of `G`
/// are sensitive to both of its components, so neither `X` nor `C` is
/// screened off by accident.
pub fn random_faithful_scm(rng: &mut impl Rng) -> DiscreteSCM {
    let mut scm = DiscreteSCM::new();
    let etas: Vec<f64> = (0..9).map(|_| rng.random_range(0.05..0.2)).collect();
    let add = |scm: &mut DiscreteSCM,
               name: &str,
               map: Vec<usize>,
               card: usize,
               parents: &[&str],
               k: usize| {
        scm.add(name, card, parents, flip_table(&map, card, etas[k]))
            .unwrap();
    };
    add(&mut scm, "L", vec![0], 2, &[], 0);
    scm.set_latent("L").unwrap();
    let m = sensitive_map(rng, &[2], 2);
    add(&mut scm, S_TILDE, m, 2, &["L"], 1);
    let m = sensitive_map(rng, &[2], 2);
    add(&mut scm, S_STAR, m, 2, &["L"], 2);
    let m = sensitive_map(rng, &[2, 2], 3);
    add(&mut scm, "X", m, 3, &[S_STAR, S_TILDE], 3);
    add(&mut scm, "C", vec![0], 2, &[], 4);
    // G is a noisy bijection of (X, C); its children are drawn over (X, C)
    let g_map = sensitive_map(rng, &[3, 2], 6);
    let through_g = |rng: &mut _, card| {
        let over_xc = sensitive_map(rng, &[3, 2], card);
        let mut m = vec![0; 6];
        for (xc, &g) in g_map.iter().enumerate() {
            m[g] = over_xc[xc];
        }
        m
    };
    let r_map = through_g(rng, 3);
    let tt_map = through_g(rng, 2);
    add(&mut scm, "G", g_map.clone(), 6, &["X", "C"], 5);
    add(&mut scm, "R", r_map, 3, &["G"], 6);
    add(&mut scm, "T~", tt_map, 2, &["G"], 7);
    let m = sensitive_map(rng, &[3], 2);
    add(&mut scm, "T", m, 2, &["R"], 8);
    scm
}
