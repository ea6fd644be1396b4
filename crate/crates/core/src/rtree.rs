//! Static bounding-box tree, bulk loaded with Sort-Tile-Recursive packing.

/// Axis-aligned bounding box.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Aabb {
    pub min_x: f64,
    pub min_y: f64,
    pub max_x: f64,
    pub max_y: f64,
}

impl Aabb {
    pub fn new(min_x: f64, min_y: f64, max_x: f64, max_y: f64) -> Self {
        Self {
            min_x,
            min_y,
            max_x,
            max_y,
        }
    }

    const EMPTY: Aabb = Aabb {
        min_x: f64::INFINITY,
        min_y: f64::INFINITY,
        max_x: f64::NEG_INFINITY,
        max_y: f64::NEG_INFINITY,
    };

    /// Closed containment test.
    pub fn contains(&self, x: f64, y: f64) -> bool {
        self.min_x <= x && x <= self.max_x && self.min_y <= y && y <= self.max_y
    }

    fn expand(&mut self, other: &Aabb) {
        self.min_x = self.min_x.min(other.min_x);
        self.min_y = self.min_y.min(other.min_y);
        self.max_x = self.max_x.max(other.max_x);
        self.max_y = self.max_y.max(other.max_y);
    }

    fn center(&self) -> (f64, f64) {
        ((self.min_x + self.max_x) * 0.5, (self.min_y + self.max_y) * 0.5)
    }
}

pub trait Bounded {
    fn bbox(&self) -> Aabb;
}

#[derive(Debug, Clone)]
struct Node {
    bbox: Aabb,
    // children live at [start, start + len) of the level below (or of `items`)
    start: usize,
    len: usize,
}

/// Read-only R-tree over items of type `T`.
#[derive(Debug, Clone)]
pub struct PackedRTree<T> {
    items: Vec<T>,
    // levels[0] holds the leaves; the last level holds the root
    levels: Vec<Vec<Node>>,
    fanout: usize,
}

impl<T: Bounded> PackedRTree<T> {
    pub fn bulk_load(items: Vec<T>, fanout: usize) -> Self {
        let fanout = fanout.max(2);
        let boxes: Vec<Aabb> = items.iter().map(Bounded::bbox).collect();
        let order = str_order(&boxes, fanout);
        let mut slots: Vec<Option<T>> = items.into_iter().map(Some).collect();
        let items: Vec<T> = order.iter().map(|&i| slots[i].take().unwrap()).collect();
        let boxes: Vec<Aabb> = order.iter().map(|&i| boxes[i]).collect();

        let mut levels = Vec::new();
        let mut level = pack(&boxes, fanout);
        while level.len() > 1 {
            let child_boxes: Vec<Aabb> = level.iter().map(|n| n.bbox).collect();
            let order = str_order(&child_boxes, fanout);
            let reordered: Vec<Node> = order.iter().map(|&i| level[i].clone()).collect();
            let parents = pack(&order.iter().map(|&i| child_boxes[i]).collect::<Vec<_>>(), fanout);
            levels.push(reordered);
            level = parents;
        }
        levels.push(level);
        Self {
            items,
            levels,
            fanout,
        }
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn fanout(&self) -> usize {
        self.fanout
    }

    pub fn height(&self) -> usize {
        self.levels.len()
    }

    /// First item whose bounding box contains `(x, y)` and that satisfies
    /// `accept`, which refines the closed box test (e.g. to half-open).
    pub fn locate(&self, x: f64, y: f64, accept: impl Fn(&T) -> bool) -> Option<&T> {
        let top = self.levels.len() - 1;
        let mut stack: Vec<(usize, usize)> = Vec::with_capacity(self.fanout * self.levels.len());
        for (i, root) in self.levels[top].iter().enumerate() {
            if root.bbox.contains(x, y) {
                stack.push((top, i));
            }
        }
        while let Some((level, idx)) = stack.pop() {
            let node = &self.levels[level][idx];
            let children = node.start..node.start + node.len;
            if level == 0 {
                if let Some(hit) = self.items[children]
                    .iter()
                    .find(|it| it.bbox().contains(x, y) && accept(it))
                {
                    return Some(hit);
                }
            } else {
                let below = &self.levels[level - 1];
                for c in children.rev() {
                    if below[c].bbox.contains(x, y) {
                        stack.push((level - 1, c));
                    }
                }
            }
        }
        None
    }
}

/// Sort-Tile-Recursive ordering: sort by x center, cut into vertical
/// slices of `slice_len` items, sort each slice by y center.
fn str_order(boxes: &[Aabb], fanout: usize) -> Vec<usize> {
    let n = boxes.len();
    let mut order: Vec<usize> = (0..n).collect();
    if n <= fanout {
        return order;
    }
    let centers: Vec<(f64, f64)> = boxes.iter().map(Aabb::center).collect();
    order.sort_by(|&a, &b| centers[a].0.total_cmp(&centers[b].0).then(a.cmp(&b)));
    let n_groups = n.div_ceil(fanout);
    let n_slices = (n_groups as f64).sqrt().ceil() as usize;
    let slice_len = n_slices * fanout;
    for slice in order.chunks_mut(slice_len) {
        slice.sort_by(|&a, &b| centers[a].1.total_cmp(&centers[b].1).then(a.cmp(&b)));
    }
    order
}

fn pack(boxes: &[Aabb], fanout: usize) -> Vec<Node> {
    if boxes.is_empty() {
        return vec![Node {
            bbox: Aabb::EMPTY,
            start: 0,
            len: 0,
        }];
    }
    boxes
        .chunks(fanout)
        .enumerate()
        .map(|(i, group)| {
            let mut bbox = Aabb::EMPTY;
            for b in group {
                bbox.expand(b);
            }
            Node {
                bbox,
                start: i * fanout,
                len: group.len(),
            }
        })
        .collect()
}
