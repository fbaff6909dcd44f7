use std::collections::VecDeque;

use crate::tensor::{coords, linear_index, voxel_count, MaskVolume};

/// A 26-connected foreground component. `voxels` holds linear indices in
/// discovery order; `voxels[0]` is the raster-first voxel (the seed).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Component {
    pub voxels: Vec<usize>,
}

impl Component {
    pub fn len(&self) -> usize {
        self.voxels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.voxels.is_empty()
    }

    pub fn seed(&self) -> usize {
        self.voxels[0]
    }
}

/// 26-connected components, largest first; equal sizes ordered by the
/// raster position of their seed voxel.
pub fn connected_components(mask: &MaskVolume) -> Vec<Component> {
    let dims = mask.dims();
    let data = mask.data();
    let mut visited = vec![false; voxel_count(dims)];
    let mut out = Vec::new();
    let mut queue = VecDeque::new();

    for start in 0..data.len() {
        if data[start] == 0 || visited[start] {
            continue;
        }
        visited[start] = true;
        queue.push_back(start);
        let mut voxels = Vec::new();
        while let Some(idx) = queue.pop_front() {
            voxels.push(idx);
            let [z, y, x] = coords(dims, idx);
            for nz in z.saturating_sub(1)..=(z + 1).min(dims[0] - 1) {
                for ny in y.saturating_sub(1)..=(y + 1).min(dims[1] - 1) {
                    for nx in x.saturating_sub(1)..=(x + 1).min(dims[2] - 1) {
                        let n = linear_index(dims, nz, ny, nx);
                        if data[n] == 1 && !visited[n] {
                            visited[n] = true;
                            queue.push_back(n);
                        }
                    }
                }
            }
        }
        out.push(Component { voxels });
    }
    // Stable sort keeps raster order of seeds among equal sizes.
    out.sort_by(|a, b| b.len().cmp(&a.len()));
    out
}

/// Mean voxel coordinate `(z, y, x)` of a component.
pub fn centroid(component: &Component, dims: crate::tensor::Dims) -> [f64; 3] {
    let mut acc = [0.0f64; 3];
    for &v in &component.voxels {
        let c = coords(dims, v);
        for a in 0..3 {
            acc[a] += c[a] as f64;
        }
    }
    let n = component.len() as f64;
    acc.map(|s| s / n)
}
