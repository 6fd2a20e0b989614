//! Density-based hierarchical clustering for small point sets: core
//! distances, mutual-reachability minimum spanning tree, single-linkage
//! hierarchy, condensed tree, and excess-of-mass cluster extraction with
//! noise labeling. Deterministic for a fixed input order; ties break toward
//! the lowest index.

/// Lambda (= 1/distance) is capped so coincident points stay finite.
const LAMBDA_CAP: f64 = 1e12;

fn lambda_of(distance: f64) -> f64 {
    if distance > 0.0 {
        (1.0 / distance).min(LAMBDA_CAP)
    } else {
        LAMBDA_CAP
    }
}

fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| {
            let d = x - y;
            d * d
        })
        .sum::<f64>()
        .sqrt()
}

struct MstEdge {
    a: usize,
    b: usize,
    weight: f64,
}

/// Prim's algorithm over the dense mutual-reachability graph, lowest index
/// winning ties.
fn mutual_reachability_mst(dist: &[Vec<f64>], core: &[f64]) -> Vec<MstEdge> {
    let n = dist.len();
    let mut in_tree = vec![false; n];
    let mut best_dist = vec![f64::INFINITY; n];
    let mut best_from = vec![0usize; n];
    let mut edges = Vec::with_capacity(n - 1);
    let mut current = 0usize;
    in_tree[0] = true;
    for _ in 1..n {
        let mut next = usize::MAX;
        let mut next_dist = f64::INFINITY;
        for j in 0..n {
            if in_tree[j] {
                continue;
            }
            let mr = dist[current][j].max(core[current]).max(core[j]);
            if mr < best_dist[j] {
                best_dist[j] = mr;
                best_from[j] = current;
            }
            if best_dist[j] < next_dist {
                next_dist = best_dist[j];
                next = j;
            }
        }
        edges.push(MstEdge {
            a: best_from[next],
            b: next,
            weight: next_dist,
        });
        in_tree[next] = true;
        current = next;
    }
    edges
}

struct SingleLinkageNode {
    left: usize,
    right: usize,
    distance: f64,
    size: usize,
}

/// Union-find over point ids 0..n and merge-node ids n..2n-1, tracking the
/// current top node of each component.
struct UnionFind {
    parent: Vec<usize>,
    size: Vec<usize>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        let total = 2 * n - 1;
        let mut size = vec![1usize; total];
        for s in size.iter_mut().skip(n) {
            *s = 0;
        }
        UnionFind {
            parent: (0..total).collect(),
            size,
        }
    }

    fn find(&mut self, x: usize) -> usize {
        let mut root = x;
        while self.parent[root] != root {
            root = self.parent[root];
        }
        let mut cur = x;
        while self.parent[cur] != root {
            let next = self.parent[cur];
            self.parent[cur] = root;
            cur = next;
        }
        root
    }

    fn union_under(&mut self, a: usize, b: usize, node: usize) {
        self.parent[a] = node;
        self.parent[b] = node;
        self.size[node] = self.size[a] + self.size[b];
    }
}

fn single_linkage(n: usize, edges: &mut Vec<MstEdge>) -> Vec<SingleLinkageNode> {
    edges.sort_by(|x, y| {
        x.weight
            .total_cmp(&y.weight)
            .then(x.a.cmp(&y.a))
            .then(x.b.cmp(&y.b))
    });
    let mut uf = UnionFind::new(n);
    let mut tree = Vec::with_capacity(n - 1);
    for (k, e) in edges.iter().enumerate() {
        let ra = uf.find(e.a);
        let rb = uf.find(e.b);
        let node = n + k;
        tree.push(SingleLinkageNode {
            left: ra,
            right: rb,
            distance: e.weight,
            size: uf.size[ra] + uf.size[rb],
        });
        uf.union_under(ra, rb, node);
    }
    tree
}

/// Condensed-tree cluster: birth density, per-point exit densities, child
/// clusters, and the excess-of-mass stability.
struct Cluster {
    birth_lambda: f64,
    children: Vec<usize>,
    /// (point, lambda at which the point left this cluster)
    points: Vec<(usize, f64)>,
    stability: f64,
}

/// Walk the single-linkage hierarchy top-down. A split where both sides hold
/// at least `min_cluster_size` points creates two child clusters; otherwise
/// the large side continues as the same cluster and the small side's points
/// fall out at the split density.
fn condense(
    n: usize,
    tree: &[SingleLinkageNode],
    min_cluster_size: usize,
) -> Vec<Cluster> {
    let slt_size = |node: usize| -> usize {
        if node < n {
            1
        } else {
            tree[node - n].size
        }
    };
    let mut clusters = vec![Cluster {
        birth_lambda: 0.0,
        children: Vec::new(),
        points: Vec::new(),
        stability: 0.0,
    }];
    // (single-linkage node, condensed cluster it belongs to)
    let root = n + tree.len() - 1;
    let mut stack = vec![(root, 0usize)];
    while let Some((node, cluster)) = stack.pop() {
        if node < n {
            // a bare point that reached the top of a continuing branch:
            // it exits when its component dissolves; handled by callers below
            continue;
        }
        let sl = &tree[node - n];
        let lambda = lambda_of(sl.distance);
        let left_big = slt_size(sl.left) >= min_cluster_size;
        let right_big = slt_size(sl.right) >= min_cluster_size;
        match (left_big, right_big) {
            (true, true) => {
                for &child in &[sl.left, sl.right] {
                    let id = clusters.len();
                    clusters.push(Cluster {
                        birth_lambda: lambda,
                        children: Vec::new(),
                        points: Vec::new(),
                        stability: 0.0,
                    });
                    clusters[cluster].children.push(id);
                    // the parent loses this mass at the split density
                    clusters[cluster].stability +=
                        (lambda - clusters[cluster].birth_lambda) * slt_size(child) as f64;
                    stack.push((child, id));
                }
            }
            (true, false) => {
                spill_points(n, tree, sl.right, lambda, cluster, &mut clusters);
                stack.push((sl.left, cluster));
            }
            (false, true) => {
                spill_points(n, tree, sl.left, lambda, cluster, &mut clusters);
                stack.push((sl.right, cluster));
            }
            (false, false) => {
                spill_points(n, tree, sl.left, lambda, cluster, &mut clusters);
                spill_points(n, tree, sl.right, lambda, cluster, &mut clusters);
            }
        }
    }
    clusters
}

/// Every point under `node` leaves `cluster` at the given density.
fn spill_points(
    n: usize,
    tree: &[SingleLinkageNode],
    node: usize,
    lambda: f64,
    cluster: usize,
    clusters: &mut [Cluster],
) {
    let mut stack = vec![node];
    while let Some(cur) = stack.pop() {
        if cur < n {
            clusters[cluster].points.push((cur, lambda));
            clusters[cluster].stability += lambda - clusters[cluster].birth_lambda;
        } else {
            stack.push(tree[cur - n].left);
            stack.push(tree[cur - n].right);
        }
    }
}

/// Excess-of-mass extraction: deepest-first, a cluster wins over its
/// children when its own stability is at least their combined propagated
/// stability. The root is an eligible candidate, so a single flat cluster
/// can be returned; when the root itself wins, only points at half the peak
/// exit density or denser become members (coarser points are noise).
pub fn cluster(points: &[Vec<f64>], min_cluster_size: usize) -> Vec<Option<usize>> {
    let n = points.len();
    assert!(n >= 2, "clustering needs at least two points");
    assert!(min_cluster_size >= 2, "min cluster size must be at least 2");
    if n < min_cluster_size {
        return vec![None; n];
    }

    let dist: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|j| euclidean(&points[i], &points[j])).collect())
        .collect();
    let k = min_cluster_size.min(n);
    let core: Vec<f64> = (0..n)
        .map(|i| {
            let mut ds = dist[i].clone();
            ds.sort_by(f64::total_cmp);
            ds[k - 1]
        })
        .collect();

    let mut edges = mutual_reachability_mst(&dist, &core);
    let linkage = single_linkage(n, &mut edges);
    let clusters = condense(n, &linkage, min_cluster_size);

    // deepest-first: children always have larger ids than their parent
    let mut selected = vec![false; clusters.len()];
    let mut propagated = vec![0.0f64; clusters.len()];
    for id in (0..clusters.len()).rev() {
        let child_sum: f64 = clusters[id].children.iter().map(|&c| propagated[c]).sum();
        if clusters[id].stability >= child_sum {
            selected[id] = true;
            deselect_descendants(&clusters, id, &mut selected);
            propagated[id] = clusters[id].stability;
        } else {
            propagated[id] = child_sum;
        }
    }

    let peak_lambda = clusters
        .iter()
        .flat_map(|c| c.points.iter().map(|&(_, l)| l))
        .fold(0.0f64, f64::max);
    let root_member_threshold = 0.5 * peak_lambda;

    // a point belongs to the nearest selected ancestor of the cluster it
    // fell out of; no selected ancestor means noise
    let mut parent_of = vec![usize::MAX; clusters.len()];
    for (id, c) in clusters.iter().enumerate() {
        for &child in &c.children {
            parent_of[child] = id;
        }
    }
    let mut labels: Vec<Option<usize>> = vec![None; n];
    let mut owner: Vec<Option<usize>> = vec![None; n];
    for (id, c) in clusters.iter().enumerate() {
        for &(p, lambda) in &c.points {
            let mut cur = id;
            loop {
                if selected[cur] {
                    let is_root = cur == 0;
                    if !is_root || lambda >= root_member_threshold {
                        owner[p] = Some(cur);
                    }
                    break;
                }
                if parent_of[cur] == usize::MAX {
                    break;
                }
                cur = parent_of[cur];
            }
        }
    }

    // stable label ids: clusters numbered by their smallest member point
    let mut firsts: Vec<(usize, usize)> = Vec::new(); // (smallest point, cluster id)
    for id in 0..clusters.len() {
        if let Some(first) = (0..n).find(|&p| owner[p] == Some(id)) {
            firsts.push((first, id));
        }
    }
    firsts.sort_unstable();
    for (label, &(_, id)) in firsts.iter().enumerate() {
        for p in 0..n {
            if owner[p] == Some(id) {
                labels[p] = Some(label);
            }
        }
    }
    labels
}

fn deselect_descendants(clusters: &[Cluster], id: usize, selected: &mut [bool]) {
    let mut stack: Vec<usize> = clusters[id].children.clone();
    while let Some(c) = stack.pop() {
        selected[c] = false;
        stack.extend(clusters[c].children.iter().copied());
    }
}
