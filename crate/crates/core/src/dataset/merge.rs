use super::LabeledBox;

/// Transitively merges same-category boxes whose Chebyshev gap is at most
/// `max_gap` into their joint extremal box. Merged boxes are flagged for
/// review; untouched boxes keep their flag. Output order follows the first
/// member of each group.
///
/// Growing a box can bring it within reach of boxes that were out of range of
/// every original member, so grouping repeats until nothing changes. That
/// fixpoint is what makes the operation idempotent.
pub fn merge_boxes(boxes: &[LabeledBox], max_gap: f64) -> Vec<LabeledBox> {
    let max_gap = max_gap.max(0.0);
    let mut current: Vec<LabeledBox> = boxes.to_vec();
    loop {
        let n = current.len();
        let mut parent: Vec<usize> = (0..n).collect();
        for i in 0..n {
            for j in (i + 1)..n {
                if current[i].category_id == current[j].category_id
                    && current[i].bbox.gap(&current[j].bbox) <= max_gap
                {
                    let (ri, rj) = (find(&mut parent, i), find(&mut parent, j));
                    if ri != rj {
                        parent[ri.max(rj)] = ri.min(rj);
                    }
                }
            }
        }
        let mut merged: Vec<(usize, LabeledBox)> = Vec::new();
        for (i, b) in current.iter().enumerate() {
            let root = find(&mut parent, i);
            match merged.iter_mut().find(|(r, _)| *r == root) {
                Some((_, acc)) => {
                    acc.bbox = acc.bbox.enclosing(&b.bbox);
                    acc.review = true;
                }
                None => merged.push((root, *b)),
            }
        }
        let changed = merged.len() != n;
        current = merged.into_iter().map(|(_, b)| b).collect();
        if !changed {
            return current;
        }
    }
}

fn find(parent: &mut [usize], mut i: usize) -> usize {
    while parent[i] != i {
        parent[i] = parent[parent[i]];
        i = parent[i];
    }
    i
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::BBox;
    use proptest::prelude::*;

    fn lb(x0: f64, y0: f64, x1: f64, y1: f64) -> LabeledBox {
        LabeledBox {
            bbox: BBox::new(x0, y0, x1, y1).unwrap(),
            category_id: 1,
            review: false,
        }
    }

    #[test]
    fn distant_boxes_unchanged() {
        let boxes = vec![lb(0.0, 0.0, 4.0, 4.0), lb(9.0, 0.0, 12.0, 4.0)];
        assert_eq!(merge_boxes(&boxes, 0.0), boxes);
    }

    #[test]
    fn close_pair_merges() {
        let out = merge_boxes(&[lb(0.0, 0.0, 4.0, 4.0), lb(6.0, 0.0, 10.0, 4.0)], 2.0);
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].bbox, BBox::new(0.0, 0.0, 10.0, 4.0).unwrap());
        assert!(out[0].review);
    }

    #[test]
    fn chain_merges_transitively() {
        // a-c gap is 7, but a-b and b-c are each 1.
        let boxes = [
            lb(0.0, 0.0, 2.0, 2.0),
            lb(3.0, 0.0, 6.0, 2.0),
            lb(7.0, 0.0, 9.0, 2.0),
        ];
        let out = merge_boxes(&boxes, 1.0);
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].bbox, BBox::new(0.0, 0.0, 9.0, 2.0).unwrap());
    }

    #[test]
    fn different_categories_stay_apart() {
        let mut b = lb(5.0, 0.0, 8.0, 4.0);
        b.category_id = 2;
        let out = merge_boxes(&[lb(0.0, 0.0, 4.0, 4.0), b], 3.0);
        assert_eq!(out.len(), 2);
    }

    #[test]
    fn growth_reaches_new_neighbours() {
        // c is 2 from a and 9 from b, but only 1 from their merged hull.
        let boxes = [
            lb(0.0, 0.0, 4.0, 10.0),
            lb(5.0, 0.0, 10.0, 2.0),
            lb(6.0, 11.0, 9.0, 14.0),
        ];
        let once = merge_boxes(&boxes, 1.0);
        assert_eq!(once.len(), 1);
        assert_eq!(merge_boxes(&once, 1.0), once);
    }

    proptest! {
        #[test]
        fn idempotent(raw in prop::collection::vec((0u32..60, 0u32..60, 1u32..10, 1u32..10), 0..12), gap in 0u32..6) {
            let boxes: Vec<LabeledBox> = raw
                .iter()
                .map(|&(x, y, w, h)| lb(x as f64, y as f64, (x + w) as f64, (y + h) as f64))
                .collect();
            let once = merge_boxes(&boxes, gap as f64);
            let twice = merge_boxes(&once, gap as f64);
            prop_assert_eq!(once, twice);
        }
    }
}
