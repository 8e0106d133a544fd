use super::VertexSet;

/// Bayes-ball reachability in `G[cut_in‾, cut_out_]`.
///
/// Returns every vertex joined to some member of `x` by a path that is
/// active given `z`. Frontiers are processed a whole set at a time.
pub(crate) fn connected_to(
    parents: &[VertexSet],
    children: &[VertexSet],
    cut_in: VertexSet,
    cut_out: VertexSet,
    x: VertexSet,
    z: VertexSet,
) -> VertexSet {
    let pa = |v: usize| {
        if cut_in.contains(v) {
            VertexSet::EMPTY
        } else {
            parents[v] - cut_out
        }
    };
    let ch = |v: usize| {
        if cut_out.contains(v) {
            VertexSet::EMPTY
        } else {
            children[v] - cut_in
        }
    };

    // z and its ancestors: colliders here are open.
    let mut anc = z;
    let mut frontier = z;
    while !frontier.is_empty() {
        let mut next = VertexSet::EMPTY;
        for v in frontier {
            next |= pa(v);
        }
        frontier = next - anc;
        anc |= next;
    }

    // up: entered from a child; down: entered from a parent.
    let mut up_seen = x;
    let mut down_seen = VertexSet::EMPTY;
    let mut up_front = x;
    let mut down_front = VertexSet::EMPTY;
    while !(up_front.is_empty() && down_front.is_empty()) {
        let mut up_next = VertexSet::EMPTY;
        let mut down_next = VertexSet::EMPTY;
        for v in up_front - z {
            up_next |= pa(v);
            down_next |= ch(v);
        }
        for v in down_front {
            if !z.contains(v) {
                down_next |= ch(v);
            }
            if anc.contains(v) {
                up_next |= pa(v);
            }
        }
        up_front = up_next - up_seen;
        down_front = down_next - down_seen;
        up_seen |= up_front;
        down_seen |= down_front;
    }
    (up_seen | down_seen) - z
}
