use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::TrainError;

/// Disjoint sorted index sets covering `0..n`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Split {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

/// Largest-remainder apportionment of `total` over `fractions`.
fn apportion(total: usize, fractions: &[f64; 3]) -> [usize; 3] {
    let ideal: Vec<f64> = fractions.iter().map(|f| f * total as f64).collect();
    let mut counts = [0usize; 3];
    for (c, q) in counts.iter_mut().zip(&ideal) {
        *c = q.floor() as usize;
    }
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| {
        let ra = ideal[a] - ideal[a].floor();
        let rb = ideal[b] - ideal[b].floor();
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    let mut left = total - counts.iter().sum::<usize>();
    for &k in order.iter().cycle() {
        if left == 0 {
            break;
        }
        counts[k] += 1;
        left -= 1;
    }
    counts
}

/// Label-stratified split of `0..labels.len()` into train, validation and
/// test sets whose global sizes are the largest-remainder apportionment of
/// `fractions`. Deterministic per seed.
pub fn split_nodes(labels: &[u8], fractions: [f64; 3], seed: u64) -> Result<Split, TrainError> {
    if fractions.iter().any(|f| !(*f >= 0.0)) || (fractions.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(TrainError::Config(format!("split fractions {fractions:?} must be nonnegative and sum to 1")));
    }
    let n = labels.len();
    let totals = apportion(n, &fractions);

    let mut classes: [Vec<usize>; 2] = [Vec::new(), Vec::new()];
    for (v, &y) in labels.iter().enumerate() {
        classes[usize::from(y.min(1))].push(v);
    }

    // Per-class counts: floor of the proportional share, then hand out the
    // remaining units so that both class sizes and split totals are met.
    let mut cells = [[0usize; 3]; 2];
    let mut rem = Vec::new();
    for c in 0..2 {
        for s in 0..3 {
            let q = classes[c].len() as f64 * totals[s] as f64 / n.max(1) as f64;
            cells[c][s] = q.floor() as usize;
            rem.push((q - q.floor(), c, s));
        }
    }
    rem.sort_by(|a, b| b.0.total_cmp(&a.0).then((a.1, a.2).cmp(&(b.1, b.2))));
    let row_need = |cells: &[[usize; 3]; 2], c: usize| classes[c].len() - cells[c].iter().sum::<usize>();
    let col_need = |cells: &[[usize; 3]; 2], s: usize| totals[s] - cells[0][s] - cells[1][s];
    for &(_, c, s) in &rem {
        if row_need(&cells, c) > 0 && col_need(&cells, s) > 0 {
            cells[c][s] += 1;
        }
    }
    for c in 0..2 {
        for s in 0..3 {
            let k = row_need(&cells, c).min(col_need(&cells, s));
            cells[c][s] += k;
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1);
    let mut sets = [Vec::new(), Vec::new(), Vec::new()];
    for (c, members) in classes.iter_mut().enumerate() {
        members.shuffle(&mut rng);
        let mut rest = members.as_slice();
        for s in 0..3 {
            let (take, tail) = rest.split_at(cells[c][s]);
            sets[s].extend_from_slice(take);
            rest = tail;
        }
    }
    for s in &mut sets {
        s.sort_unstable();
    }
    let [train, val, test] = sets;
    Ok(Split { train, val, test })
}
