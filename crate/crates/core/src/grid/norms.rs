use crate::geometry::InterfaceFace;
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NormKind {
    L2,
    Linf,
}

/// Volume-weighted norm over the cells selected by `mask` (all cells when `None`).
pub fn norm<T: Real>(values: &[T], cell_volume: f64, mask: Option<&[bool]>, kind: NormKind) -> f64 {
    let sel = |i: usize| mask.is_none_or(|m| m[i]);
    let it = values.iter().enumerate().filter(|(i, _)| sel(*i)).map(|(_, v)| v.as_f64());
    match kind {
        NormKind::L2 => (it.map(|v| v * v).sum::<f64>() * cell_volume).sqrt(),
        NormKind::Linf => it.fold(0.0, |m, v| m.max(v.abs())),
    }
}

pub fn diff_norm<T: Real>(a: &[T], b: &[T], cell_volume: f64, mask: Option<&[bool]>, kind: NormKind) -> f64 {
    assert_eq!(a.len(), b.len());
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x.as_f64() - y.as_f64()).collect();
    norm(&d, cell_volume, mask, kind)
}

/// `( Σ_faces area · (θ_lo − θ_hi)² )^{1/2}`: L2 norm of the jump over an interface.
pub fn jump_norm<T: Real>(theta: &[T], faces: &[InterfaceFace]) -> f64 {
    faces
        .iter()
        .map(|f| {
            let j = theta[f.lo].as_f64() - theta[f.hi].as_f64();
            f.area * j * j
        })
        .sum::<f64>()
        .sqrt()
}
