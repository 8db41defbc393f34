#include "fedpoison/clustering.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <map>
#include <numeric>
#include <random>
#include <set>

#include "fedpoison/rng.hpp"

namespace fedpoison {

void validate_distance_matrix(const DistanceMatrix& d) {
    const std::size_t n = d.size();
    for (std::size_t i = 0; i < n; ++i) {
        if (d[i].size() != n) throw std::invalid_argument("distance matrix is not square");
        if (d[i][i] != 0.0) throw std::invalid_argument("distance matrix diagonal must be zero");
        for (std::size_t j = 0; j < n; ++j) {
            if (!std::isfinite(d[i][j]) || d[i][j] < 0.0) throw std::invalid_argument("distance entries must be finite and >= 0");
            if (d[i][j] != d[j][i]) throw std::invalid_argument("distance matrix is not symmetric");
        }
    }
}

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

struct Edge {
    int a, b;
    double dist;
};

struct Merge {
    int left, right;
    double dist;
    int size;
};

struct CondensedRow {
    int parent, child;
    double lambda;
    int size;
};

std::vector<Edge> prim_mst(const DistanceMatrix& mr) {
    const int n = static_cast<int>(mr.size());
    std::vector<Edge> mst;
    std::vector<int> labels(n);
    std::iota(labels.begin(), labels.end(), 0);
    std::vector<double> reach(n, kInf);
    int current = 0;
    for (int it = 0; it < n - 1; ++it) {
        std::vector<int> next_labels;
        std::vector<double> next_reach;
        for (std::size_t t = 0; t < labels.size(); ++t) {
            if (labels[t] == current) continue;
            next_labels.push_back(labels[t]);
            next_reach.push_back(std::min(reach[t], mr[current][labels[t]]));
        }
        labels.swap(next_labels);
        reach.swap(next_reach);
        std::size_t best = 0;
        for (std::size_t t = 1; t < reach.size(); ++t)
            if (reach[t] < reach[best]) best = t;
        mst.push_back({current, labels[best], reach[best]});
        current = labels[best];
    }
    return mst;
}

std::vector<Merge> single_linkage(std::vector<Edge> mst, int n) {
    std::stable_sort(mst.begin(), mst.end(), [](const Edge& x, const Edge& y) {
        if (x.dist != y.dist) return x.dist < y.dist;
        int xl = std::min(x.a, x.b), yl = std::min(y.a, y.b);
        if (xl != yl) return xl < yl;
        return std::max(x.a, x.b) < std::max(y.a, y.b);
    });
    std::vector<int> parent(2 * n - 1, -1), size(2 * n - 1, 0);
    for (int i = 0; i < n; ++i) size[i] = 1;
    int next_label = n;
    auto find = [&](int x) {
        int root = x;
        while (parent[root] != -1) root = parent[root];
        while (parent[x] != -1 && parent[x] != root) {
            int up = parent[x];
            parent[x] = root;
            x = up;
        }
        return root;
    };
    std::vector<Merge> out;
    for (const Edge& e : mst) {
        int ca = find(e.a), cb = find(e.b);
        out.push_back({ca, cb, e.dist, size[ca] + size[cb]});
        parent[ca] = parent[cb] = next_label;
        size[next_label] = size[ca] + size[cb];
        ++next_label;
    }
    return out;
}

std::vector<int> bfs_hierarchy(const std::vector<Merge>& h, int root, int n) {
    std::vector<int> result, queue{root};
    while (!queue.empty()) {
        result.insert(result.end(), queue.begin(), queue.end());
        std::vector<int> next;
        for (int x : queue)
            if (x >= n) {
                next.push_back(h[x - n].left);
                next.push_back(h[x - n].right);
            }
        queue.swap(next);
    }
    return result;
}

std::vector<CondensedRow> condense(const std::vector<Merge>& h, int n, int mcs) {
    const int root = 2 * (n - 1);
    int next_label = n + 1;
    std::vector<int> relabel(root + 1, 0);
    std::vector<char> ignore(root + 1, 0);
    relabel[root] = n;
    std::vector<CondensedRow> rows;
    auto count_of = [&](int node) { return node >= n ? h[node - n].size : 1; };
    auto drop_points = [&](int from, int parent_label, double lambda) {
        for (int sub : bfs_hierarchy(h, from, n)) {
            if (sub < n) rows.push_back({parent_label, sub, lambda, 1});
            ignore[sub] = 1;
        }
    };
    for (int node : bfs_hierarchy(h, root, n)) {
        if (ignore[node] || node < n) continue;
        const Merge& m = h[node - n];
        double lambda = m.dist > 0.0 ? 1.0 / m.dist : kInf;
        int lc = count_of(m.left), rc = count_of(m.right);
        if (lc >= mcs && rc >= mcs) {
            relabel[m.left] = next_label++;
            rows.push_back({relabel[node], relabel[m.left], lambda, lc});
            relabel[m.right] = next_label++;
            rows.push_back({relabel[node], relabel[m.right], lambda, rc});
        } else if (lc < mcs && rc < mcs) {
            drop_points(m.left, relabel[node], lambda);
            drop_points(m.right, relabel[node], lambda);
        } else if (lc < mcs) {
            relabel[m.right] = relabel[node];
            drop_points(m.left, relabel[node], lambda);
        } else {
            relabel[m.left] = relabel[node];
            drop_points(m.right, relabel[node], lambda);
        }
    }
    return rows;
}

// Rank-based union-find mirroring the reference labelling pass.
struct TreeUnionFind {
    std::vector<int> parent, rank;
    explicit TreeUnionFind(int size) : parent(size), rank(size, 0) { std::iota(parent.begin(), parent.end(), 0); }
    int find(int x) {
        if (parent[x] != x) parent[x] = find(parent[x]);
        return parent[x];
    }
    void unite(int x, int y) {
        int xr = find(x), yr = find(y);
        if (rank[xr] < rank[yr]) parent[xr] = yr;
        else if (rank[xr] > rank[yr]) parent[yr] = xr;
        else {
            parent[yr] = xr;
            rank[xr] += 1;
        }
    }
};

}  // namespace

std::vector<int> hdbscan(const DistanceMatrix& d, const HdbscanOptions& opt) {
    validate_distance_matrix(d);
    const int n = static_cast<int>(d.size());
    const int mcs = opt.min_cluster_size;
    if (mcs < 2) throw std::invalid_argument("min_cluster_size must be >= 2");
    if (n < mcs) throw TooFewPoints("hdbscan: fewer points than min_cluster_size");
    const int ms = std::min(opt.min_samples > 0 ? opt.min_samples : mcs, n);

    std::vector<double> core(n);
    for (int i = 0; i < n; ++i) {
        std::vector<double> row = d[i];
        std::nth_element(row.begin(), row.begin() + (ms - 1), row.end());
        core[i] = row[ms - 1];
    }
    DistanceMatrix mr(n, std::vector<double>(n));
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) mr[i][j] = std::max({core[i], core[j], d[i][j]});

    auto tree = single_linkage(prim_mst(mr), n);
    auto rows = condense(tree, n, mcs);

    // stability per condensed cluster id
    const int root = n;
    int max_parent = root, max_child = root;
    for (const auto& r : rows) {
        max_parent = std::max(max_parent, r.parent);
        max_child = std::max(max_child, r.child);
    }
    std::vector<double> birth(max_child + 1, std::numeric_limits<double>::quiet_NaN());
    for (const auto& r : rows) birth[r.child] = r.lambda;
    birth[root] = 0.0;
    std::map<int, double> stability;
    for (int c = root; c <= max_parent; ++c) stability[c] = 0.0;
    for (const auto& r : rows) stability[r.parent] += (r.lambda - birth[r.parent]) * r.size;

    std::vector<int> node_list;
    for (auto it = stability.rbegin(); it != stability.rend(); ++it) node_list.push_back(it->first);
    if (!opt.allow_single_cluster) node_list.pop_back();

    std::vector<CondensedRow> cluster_rows;
    for (const auto& r : rows)
        if (r.size > 1) cluster_rows.push_back(r);
    std::map<int, bool> is_cluster;
    for (int c : node_list) is_cluster[c] = true;

    for (int node : node_list) {
        double subtree = 0.0;
        for (const auto& r : cluster_rows)
            if (r.parent == node) subtree += stability[r.child];
        if (subtree > stability[node]) {
            is_cluster[node] = false;
            stability[node] = subtree;
        } else {
            std::deque<int> queue{node};
            while (!queue.empty()) {
                int x = queue.front();
                queue.pop_front();
                if (x != node) is_cluster[x] = false;
                for (const auto& r : cluster_rows)
                    if (r.parent == x) queue.push_back(r.child);
            }
        }
    }

    std::set<int> clusters;
    for (const auto& [c, sel] : is_cluster)
        if (sel) clusters.insert(c);
    std::map<int, int> label_of;
    for (int c : clusters) label_of[c] = static_cast<int>(label_of.size());

    TreeUnionFind uf(max_parent + 1);
    for (const auto& r : rows)
        if (!clusters.count(r.child)) uf.unite(r.parent, r.child);

    double root_max_lambda = -kInf;
    for (const auto& r : rows)
        if (r.parent == root) root_max_lambda = std::max(root_max_lambda, r.lambda);

    std::vector<int> labels(n, -1);
    for (int p = 0; p < n; ++p) {
        int c = uf.find(p);
        if (c != root) {
            auto it = label_of.find(c);
            if (it == label_of.end()) throw std::logic_error("hdbscan: point resolved to an unselected cluster");
            labels[p] = it->second;
        } else if (clusters.size() == 1 && opt.allow_single_cluster) {
            double point_lambda = 0.0;
            for (const auto& r : rows)
                if (r.child == p) point_lambda = r.lambda;
            if (point_lambda >= root_max_lambda) labels[p] = label_of.at(c);
        }
    }
    return labels;
}

std::vector<int> hdbscan(const DistanceMatrix& d, int min_cluster_size) {
    HdbscanOptions opt;
    opt.min_cluster_size = min_cluster_size;
    return hdbscan(d, opt);
}

KMeansResult kmeans_1d(const std::vector<double>& scores, int k) {
    const int n = static_cast<int>(scores.size());
    if (k < 1 || k > n) throw std::invalid_argument("kmeans_1d: need 1 <= k <= n");
    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return scores[a] < scores[b]; });
    std::vector<double> x(n), s1(n + 1, 0.0), s2(n + 1, 0.0);
    for (int i = 0; i < n; ++i) {
        x[i] = scores[order[i]];
        s1[i + 1] = s1[i] + x[i];
        s2[i + 1] = s2[i] + x[i] * x[i];
    }
    // sse of sorted x[i..j), computed around the local mean for accuracy
    auto sse = [&](int i, int j) {
        double m = (s1[j] - s1[i]) / (j - i);
        double acc = 0.0;
        for (int t = i; t < j; ++t) acc += (x[t] - m) * (x[t] - m);
        return acc;
    };
    std::vector<std::vector<double>> cost(n + 1, std::vector<double>(n + 1, 0.0));
    for (int i = 0; i < n; ++i)
        for (int j = i + 1; j <= n; ++j) cost[i][j] = sse(i, j);

    // dp[c][j]: best cost of splitting x[0..j) into c clusters
    std::vector<std::vector<double>> dp(k + 1, std::vector<double>(n + 1, kInf));
    std::vector<std::vector<int>> arg(k + 1, std::vector<int>(n + 1, 0));
    dp[0][0] = 0.0;
    for (int c = 1; c <= k; ++c)
        for (int j = c; j <= n; ++j)
            for (int i = c - 1; i < j; ++i) {
                double v = dp[c - 1][i] + cost[i][j];
                if (v < dp[c][j]) {
                    dp[c][j] = v;
                    arg[c][j] = i;
                }
            }

    KMeansResult res;
    res.labels.assign(n, 0);
    res.centers.assign(k, 0.0);
    res.wcss = dp[k][n];
    int j = n;
    for (int c = k; c >= 1; --c) {
        int i = arg[c][j];
        res.centers[c - 1] = (s1[j] - s1[i]) / (j - i);
        for (int t = i; t < j; ++t) res.labels[order[t]] = c - 1;
        j = i;
    }
    return res;
}

GapResult gap_statistic(const std::vector<double>& scores, int k_max, int B, std::uint64_t seed) {
    if (k_max < 2) throw std::invalid_argument("gap_statistic: k_max must be >= 2");
    if (B < 1) throw std::invalid_argument("gap_statistic: B must be >= 1");
    const int n = static_cast<int>(scores.size());
    GapResult res;
    if (n < 2) return res;
    const auto [lo_it, hi_it] = std::minmax_element(scores.begin(), scores.end());
    const double lo = *lo_it, hi = *hi_it;
    if (hi - lo <= 0.0) return res;  // zero dispersion
    const int kk = std::min(k_max, n);
    const double floor_w = (hi - lo) * (hi - lo) * 1e-20;
    auto logw = [&](const std::vector<double>& xs, int k) { return std::log(std::max(kmeans_1d(xs, k).wcss, floor_w)); };

    std::vector<std::vector<double>> ref_logw(kk, std::vector<double>(B));
    for (int b = 0; b < B; ++b) {
        Rng rng(derive_seed(seed, "gap_reference", {static_cast<std::uint64_t>(b)}));
        std::uniform_real_distribution<double> u(lo, hi);
        std::vector<double> ref(n);
        for (double& v : ref) v = u(rng);
        for (int k = 1; k <= kk; ++k) ref_logw[k - 1][b] = logw(ref, k);
    }
    res.gap.resize(kk);
    res.s.resize(kk);
    for (int k = 1; k <= kk; ++k) {
        const auto& r = ref_logw[k - 1];
        double m = std::accumulate(r.begin(), r.end(), 0.0) / B;
        double var = 0.0;
        for (double v : r) var += (v - m) * (v - m);
        double sd = std::sqrt(var / B);
        res.gap[k - 1] = m - logw(scores, k);
        res.s[k - 1] = sd * std::sqrt(1.0 + 1.0 / B);
    }
    res.k = 1;
    for (int k = 1; k < kk; ++k)
        if (res.gap[k - 1] >= res.gap[k] - res.s[k]) {
            res.k = k;
            return res;
        }
    return res;
}

}  // namespace fedpoison
