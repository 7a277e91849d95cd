use crate::model::ParameterStore;
use crate::scalar::Scalar;

/// Masks the `floor(fraction * N)` smallest-magnitude entries over every
/// prunable tensor, where `N` counts all their entries. Ties go to the
/// lower flat index in storage order. Existing masks are kept.
///
/// Returns the number of newly masked entries.
pub fn prune_global<S: Scalar>(store: &mut ParameterStore<S>, fraction: f64) -> usize {
    assert!((0.0..1.0).contains(&fraction), "fraction outside [0, 1)");
    let mut entries: Vec<(f64, usize, usize)> = Vec::new();
    for (pi, p) in store.params().iter().enumerate() {
        if !p.kind.prunable() {
            continue;
        }
        for (j, v) in p.value.data().iter().enumerate() {
            entries.push((v.f64().abs(), pi, j));
        }
    }
    let k = (fraction * entries.len() as f64).floor() as usize;
    if k == 0 {
        return 0;
    }
    // (pi, j) follows storage order, so it doubles as the global flat index
    entries.sort_by(|a, b| a.0.total_cmp(&b.0).then((a.1, a.2).cmp(&(b.1, b.2))));
    let mut added = 0;
    for &(_, pi, j) in &entries[..k] {
        let p = store.param_mut(pi);
        let len = p.value.len();
        let mask = p.mask.get_or_insert_with(|| vec![false; len]);
        if !mask[j] {
            mask[j] = true;
            added += 1;
        }
    }
    for p in store.params_mut() {
        p.apply_mask();
    }
    added
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ModelConfig, ShareMode};

    fn store() -> ParameterStore<f64> {
        let cfg = ModelConfig::dyadic(1, 1, 2, (1, 2, 2, 2), 1, ShareMode::Hybrid);
        ParameterStore::build(&cfg, 3).unwrap()
    }

    fn prunable_values(s: &mut ParameterStore<f64>) -> Vec<&mut f64> {
        s.params_mut()
            .iter_mut()
            .filter(|p| p.kind.prunable())
            .flat_map(|p| p.value.data_mut().iter_mut())
            .collect()
    }

    #[test]
    fn smallest_fraction_is_masked() {
        let mut s = store();
        let n = {
            let mut vals = prunable_values(&mut s);
            let n = vals.len();
            // distinct magnitudes in scrambled order
            for (i, v) in vals.iter_mut().enumerate() {
                **v = ((i * 7919) % n + 1) as f64 * if i % 2 == 0 { 1.0 } else { -1.0 };
            }
            n
        };
        let before: Vec<f64> = prunable_values(&mut s)
            .into_iter()
            .map(|v| v.abs())
            .collect();
        let k = (0.15 * n as f64).floor() as usize;
        assert_eq!(prune_global(&mut s, 0.15), k);
        let masks: Vec<bool> = s
            .params()
            .iter()
            .filter(|p| p.kind.prunable())
            .flat_map(|p| p.mask.clone().unwrap_or(vec![false; p.value.len()]))
            .collect();
        let mut pruned: Vec<f64> = before
            .iter()
            .zip(&masks)
            .filter(|(_, m)| **m)
            .map(|(v, _)| *v)
            .collect();
        pruned.sort_by(f64::total_cmp);
        let want: Vec<f64> = (1..=k).map(|v| v as f64).collect();
        assert_eq!(pruned, want);
        assert!(prunable_values(&mut s)
            .iter()
            .zip(&masks)
            .all(|(v, m)| !*m || **v == 0.0));
    }

    #[test]
    fn zero_fraction_creates_no_mask() {
        let mut s = store();
        assert_eq!(prune_global(&mut s, 0.0), 0);
        assert!(!s.has_masks());
    }

    #[test]
    fn ties_go_to_lower_indices() {
        let mut s = store();
        for v in prunable_values(&mut s) {
            *v = 0.5;
        }
        let n = prunable_values(&mut s).len();
        prune_global(&mut s, 0.5);
        let flat: Vec<bool> = s
            .params()
            .iter()
            .filter(|p| p.kind.prunable())
            .flat_map(|p| p.mask.clone().unwrap_or(vec![false; p.value.len()]))
            .collect();
        let k = n / 2;
        assert!(flat[..k].iter().all(|&b| b));
        assert!(flat[k..].iter().all(|&b| !b));
    }
}
