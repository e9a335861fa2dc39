//! Nondominated sorting and crowding distance for the (accuracy ↑, cost ↓)
//! bi-objective mode.

/// `a` dominates `b`: no worse in both objectives and strictly better in one.
fn dominates(a: (f64, f64), b: (f64, f64)) -> bool {
    a.0 >= b.0 && a.1 <= b.1 && (a.0 > b.0 || a.1 < b.1)
}

/// Pareto fronts as index lists; front 0 is the nondominated set.
/// Indices inside each front are ascending.
pub fn nondominated_sort(points: &[(f64, f64)]) -> Vec<Vec<usize>> {
    let n = points.len();
    let mut dominated_by_count = vec![0usize; n];
    let mut dominates_list: Vec<Vec<usize>> = vec![Vec::new(); n];
    for i in 0..n {
        for j in 0..n {
            if i != j && dominates(points[i], points[j]) {
                dominates_list[i].push(j);
                dominated_by_count[j] += 1;
            }
        }
    }
    let mut fronts = Vec::new();
    let mut current: Vec<usize> = (0..n).filter(|&i| dominated_by_count[i] == 0).collect();
    while !current.is_empty() {
        let mut next = Vec::new();
        for &i in &current {
            for &j in &dominates_list[i] {
                dominated_by_count[j] -= 1;
                if dominated_by_count[j] == 0 {
                    next.push(j);
                }
            }
        }
        next.sort_unstable();
        fronts.push(current);
        current = next;
    }
    fronts
}

/// Crowding distance of each point in `front`, aligned with the input.
/// Boundary points per objective get `+∞`; interior points sum the
/// range-normalized gap between their neighbours in each objective.
pub fn crowding_distance(front: &[(f64, f64)]) -> Vec<f64> {
    let n = front.len();
    let mut dist = vec![0.0; n];
    if n <= 2 {
        return vec![f64::INFINITY; n];
    }
    let objectives: [fn(&(f64, f64)) -> f64; 2] = [|p| p.0, |p| p.1];
    for (k, obj) in objectives.iter().enumerate() {
        let other = objectives[1 - k];
        // ties broken by the other objective so the result ignores input order
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| {
            obj(&front[a])
                .total_cmp(&obj(&front[b]))
                .then(other(&front[a]).total_cmp(&other(&front[b])))
        });
        let lo = obj(&front[order[0]]);
        let hi = obj(&front[order[n - 1]]);
        dist[order[0]] = f64::INFINITY;
        dist[order[n - 1]] = f64::INFINITY;
        let range = hi - lo;
        if range <= 0.0 {
            continue;
        }
        for w in order.windows(3) {
            let gap = obj(&front[w[2]]) - obj(&front[w[0]]);
            dist[w[1]] += gap / range;
        }
    }
    dist
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_point() {
        assert_eq!(nondominated_sort(&[(0.5, 10.0)]), vec![vec![0]]);
    }

    #[test]
    fn three_point_example() {
        let pts = [(0.9, 100.0), (0.8, 50.0), (0.7, 200.0)];
        assert_eq!(nondominated_sort(&pts), vec![vec![0, 1], vec![2]]);
    }

    #[test]
    fn tradeoff_curve_is_one_front() {
        let pts: Vec<(f64, f64)> = (0..8).map(|i| (1.0 - i as f64 * 0.1, 100.0 - i as f64 * 10.0)).collect();
        assert_eq!(nondominated_sort(&pts).len(), 1);
    }

    #[test]
    fn crowding_examples() {
        assert_eq!(crowding_distance(&[(0.9, 1.0), (0.8, 0.5)]), vec![f64::INFINITY; 2]);
        let d = crowding_distance(&[(0.9, 3.0), (0.8, 2.0), (0.7, 1.0)]);
        assert_eq!(d[0], f64::INFINITY);
        assert_eq!(d[2], f64::INFINITY);
        assert!((d[1] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn crowding_ignores_input_order() {
        let pts = [(0.9, 5.0), (0.85, 4.0), (0.7, 3.5), (0.6, 1.0), (0.5, 0.5)];
        let d = crowding_distance(&pts);
        let perm = [3, 0, 4, 2, 1];
        let shuffled: Vec<_> = perm.iter().map(|&i| pts[i]).collect();
        let ds = crowding_distance(&shuffled);
        for (k, &i) in perm.iter().enumerate() {
            assert_eq!(ds[k], d[i]);
        }
    }
}
