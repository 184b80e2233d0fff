# Quorum graphs: strongly connected components and brute-force intersection.

# %%
from afba.model import QuorumSlice
from afba.quorum import build_graph, byzantine_bound, check_intersection, scc


def slices(d):
    return {k: QuorumSlice(k, frozenset(v)) for k, v in d.items()}


# %% two closed triangles: each is a quorum, and they do not meet
split = slices({"a": "bc", "b": "ac", "c": "ab", "d": "ef", "e": "df", "f": "de"})
nodes = frozenset("abcdef")
print("components:", [sorted(c) for c in scc(build_graph(split, nodes)).components])
res = check_intersection(split, nodes)
print("intersects:", res.intersects, "pair:", [sorted(q) for q in res.pair])

# %% one bridge each way merges the graph into a single component
bridged = dict(split, c=QuorumSlice("c", frozenset("abd")), f=QuorumSlice("f", frozenset("dea")))
print("components after bridging:", scc(build_graph(bridged, nodes)).component_count)
res = check_intersection(bridged, nodes)
print("minimal quorums:", sorted(sorted(q) for q in res.quorums), "intersects:", res.intersects)

# %% classical bound
for n in (4, 7, 74):
    print(f"n={n}: tolerates f={byzantine_bound(n)}")
