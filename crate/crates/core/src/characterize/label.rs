use crate::grid::BoolGrid;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Connectivity {
    Four,
    Eight,
}

/// Connected-component labelling result. `labels[i] == 0` marks background;
/// components are numbered `1..=count` in raster order of first appearance.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Components {
    pub height: usize,
    pub width: usize,
    pub labels: Vec<u32>,
    pub count: usize,
}

fn find(parent: &mut [u32], mut x: u32) -> u32 {
    while parent[x as usize] != x {
        parent[x as usize] = parent[parent[x as usize] as usize];
        x = parent[x as usize];
    }
    x
}

/// Two-pass union-find labelling of the set pixels of `grid`.
pub fn label_components(grid: &BoolGrid, connectivity: Connectivity) -> Components {
    let (h, w) = (grid.height(), grid.width());
    let mut provisional = vec![0u32; h * w];
    let mut parent: Vec<u32> = vec![0];
    for y in 0..h {
        for x in 0..w {
            if !grid.get(y, x) {
                continue;
            }
            let mut neighbours = [0u32; 4];
            let mut n = 0;
            let mut push = |ny: usize, nx: usize| {
                let l = provisional[ny * w + nx];
                if l != 0 {
                    neighbours[n] = l;
                    n += 1;
                }
            };
            if x > 0 {
                push(y, x - 1);
            }
            if y > 0 {
                push(y - 1, x);
                if connectivity == Connectivity::Eight {
                    if x > 0 {
                        push(y - 1, x - 1);
                    }
                    if x + 1 < w {
                        push(y - 1, x + 1);
                    }
                }
            }
            let label = if n == 0 {
                let l = parent.len() as u32;
                parent.push(l);
                l
            } else {
                let mut root = find(&mut parent, neighbours[0]);
                for &other in &neighbours[1..n] {
                    let r = find(&mut parent, other);
                    if r != root {
                        let (lo, hi) = (root.min(r), root.max(r));
                        parent[hi as usize] = lo;
                        root = lo;
                    }
                }
                root
            };
            provisional[y * w + x] = label;
        }
    }
    // compact roots to 1..=count in raster order
    let mut compact = vec![0u32; parent.len()];
    let mut count = 0u32;
    let mut labels = vec![0u32; h * w];
    for i in 0..h * w {
        if provisional[i] == 0 {
            continue;
        }
        let root = find(&mut parent, provisional[i]) as usize;
        if compact[root] == 0 {
            count += 1;
            compact[root] = count;
        }
        labels[i] = compact[root];
    }
    Components { height: h, width: w, labels, count: count as usize }
}
