//! Constant-time lowest common ancestor queries via an Euler tour and a
//! sparse table over first-occurrence depths.

#[derive(Debug, Clone)]
pub struct LcaIndex {
    first: Vec<u32>,
    depth: Vec<u32>,
    euler: Vec<u32>,
    /// `table[j][i]` holds the tour position of minimum depth in `[i, i + 2^j)`.
    table: Vec<Vec<u32>>,
}

impl LcaIndex {
    /// `children[v]` lists the children of `v`; `root` is the tree root.
    pub fn new(children: &[Vec<usize>], root: usize) -> Self {
        let n = children.len();
        let mut depth = vec![0u32; n];
        let mut first = vec![u32::MAX; n];
        let mut euler = Vec::with_capacity(2 * n);
        // (node, next child index)
        let mut stack: Vec<(usize, usize)> = vec![(root, 0)];
        while let Some(&mut (v, ref mut next)) = stack.last_mut() {
            if *next == 0 {
                first[v] = euler.len() as u32;
            }
            euler.push(v as u32);
            if let Some(&c) = children[v].get(*next) {
                *next += 1;
                depth[c] = depth[v] + 1;
                stack.push((c, 0));
            } else {
                stack.pop();
            }
        }
        let m = euler.len();
        let mut table = vec![(0..m as u32).collect::<Vec<u32>>()];
        let mut span = 1;
        while span * 2 <= m {
            let prev = table.last().unwrap();
            let mut row = Vec::with_capacity(m - span * 2 + 1);
            for i in 0..=m - span * 2 {
                let (a, b) = (prev[i], prev[i + span]);
                row.push(
                    if depth[euler[a as usize] as usize] <= depth[euler[b as usize] as usize] {
                        a
                    } else {
                        b
                    },
                );
            }
            table.push(row);
            span *= 2;
        }
        LcaIndex {
            first,
            depth,
            euler,
            table,
        }
    }

    pub fn depth(&self, v: usize) -> u32 {
        self.depth[v]
    }

    pub fn lca(&self, a: usize, b: usize) -> usize {
        let (mut i, mut j) = (self.first[a] as usize, self.first[b] as usize);
        if i > j {
            std::mem::swap(&mut i, &mut j);
        }
        let len = j - i + 1;
        let k = usize::BITS as usize - 1 - len.leading_zeros() as usize;
        let (x, y) = (self.table[k][i], self.table[k][j + 1 - (1 << k)]);
        let (vx, vy) = (self.euler[x as usize], self.euler[y as usize]);
        if self.depth[vx as usize] <= self.depth[vy as usize] {
            vx as usize
        } else {
            vy as usize
        }
    }

    pub fn is_ancestor(&self, anc: usize, desc: usize) -> bool {
        self.depth[anc] <= self.depth[desc] && self.lca(anc, desc) == anc
    }
}
