#include "pvloc/anchors_tracking.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <tuple>

namespace pvloc {

namespace {

struct Patch {
    std::vector<double> histogram;  // normalized
    double mean = 0.0;
};

/// Samples the transition region between two neighbouring detections: a
/// rectangle spanning the space between their facing edges.
Patch sample_transition(const ImageU8& image, const ModuleDetection& a, const ModuleDetection& b,
                        double module_w, double module_h, int bins) {
    const Vec2 ca = a.center(), cb = b.center();
    Vec2 dir = cb - ca;
    const double dist = dir.norm();
    Patch patch;
    patch.histogram.assign(bins, 0.0);
    if (dist < 1e-9) return patch;
    dir /= dist;
    const Vec2 n(-dir.y(), dir.x());

    const double gap_w = std::max(2.0, dist - module_w);
    const double h = std::max(2.0, 0.6 * module_h);
    const Vec2 mid = (ca + cb) / 2.0;

    double sum = 0.0;
    long count = 0;
    for (double sy = -h / 2; sy <= h / 2; sy += 1.0)
        for (double sx = -gap_w / 2; sx <= gap_w / 2; sx += 1.0) {
            const Vec2 p = mid + dir * sx + n * sy;
            if (p.x() < 0 || p.y() < 0 || p.x() > image.width - 1 || p.y() > image.height - 1)
                continue;
            const double v = image.sample(p.x(), p.y());
            const int bin = std::min(bins - 1, static_cast<int>(v / 256.0 * bins));
            patch.histogram[bin] += 1.0;
            sum += v;
            ++count;
        }
    if (count > 0) {
        for (auto& hb : patch.histogram) hb /= static_cast<double>(count);
        patch.mean = sum / static_cast<double>(count);
    }
    return patch;
}

double bhattacharyya_distance(const std::vector<double>& a, const std::vector<double>& b) {
    double bc = 0.0;
    for (size_t i = 0; i < a.size(); ++i) bc += std::sqrt(a[i] * b[i]);
    return std::sqrt(std::max(0.0, 1.0 - bc));
}

}  // namespace

std::vector<GapObservation> detect_bench_gaps(const SemanticStructure& structure,
                                              const ImageU8& image,
                                              const GapDetectParams& params) {
    std::vector<GapObservation> out;
    const double module_w = structure.rep_width;
    const double module_h = structure.rep_height;

    for (int r = 0; r < structure.row_count(); ++r) {
        const auto row = structure.row_detections(r);
        if (row.size() < 3) continue;

        std::vector<double> spacing(row.size() - 1);
        for (size_t i = 0; i + 1 < row.size(); ++i)
            spacing[i] = (row[i + 1]->center() - row[i]->center()).norm();
        std::vector<double> sorted = spacing;
        std::sort(sorted.begin(), sorted.end());
        const double med = sorted[sorted.size() / 2];
        if (med <= 1e-9) continue;

        std::vector<size_t> candidates;
        std::vector<Patch> normals;
        for (size_t i = 0; i < spacing.size(); ++i) {
            if (spacing[i] > params.spacing_factor * med)
                candidates.push_back(i);
            else
                normals.push_back(sample_transition(image, *row[i], *row[i + 1], module_w, module_h,
                                                    params.hist_bins));
        }
        if (candidates.empty() || normals.empty()) continue;

        // median intra-bench transition histogram (element-wise) and mean level
        Patch reference;
        reference.histogram.assign(params.hist_bins, 0.0);
        for (int b = 0; b < params.hist_bins; ++b) {
            std::vector<double> vals;
            for (const auto& p : normals) vals.push_back(p.histogram[b]);
            std::sort(vals.begin(), vals.end());
            reference.histogram[b] = vals[vals.size() / 2];
        }
        const double hist_sum =
            std::accumulate(reference.histogram.begin(), reference.histogram.end(), 0.0);
        if (hist_sum > 0)
            for (auto& hb : reference.histogram) hb /= hist_sum;
        std::vector<double> means;
        for (const auto& p : normals) means.push_back(p.mean);
        std::sort(means.begin(), means.end());
        reference.mean = means[means.size() / 2];

        for (const size_t i : candidates) {
            const Patch patch = sample_transition(image, *row[i], *row[i + 1], module_w, module_h,
                                                  params.hist_bins);
            const double dist = bhattacharyya_distance(patch.histogram, reference.histogram);
            const double darkness = patch.mean - reference.mean;
            if (dist > params.confirm_threshold && darkness < 0.0) {
                GapObservation g;
                g.row = r;
                g.seq_left = row[i]->seq;
                g.seq_right = row[i + 1]->seq;
                g.image_pos = (row[i]->center() + row[i + 1]->center()) / 2.0;
                g.darkness = darkness;
                g.distance = dist;
                out.push_back(g);
            }
        }
    }
    return out;
}

std::vector<EndObservation> detect_bench_ends(const SemanticStructure& structure, int image_width,
                                              int image_height, double margin_px) {
    std::vector<EndObservation> out;
    (void)image_height;
    for (int r = 0; r < structure.row_count(); ++r) {
        const auto row = structure.row_detections(r);
        if (row.empty()) continue;

        auto extent = [](const ModuleDetection& d) {
            double lo = 1e300, hi = -1e300;
            if (d.has_corners) {
                for (const auto& c : d.corners) {
                    lo = std::min(lo, c.x());
                    hi = std::max(hi, c.x());
                }
            } else {
                for (const auto& c : d.box.corners()) {
                    lo = std::min(lo, c.x());
                    hi = std::max(hi, c.x());
                }
            }
            return std::make_pair(lo, hi);
        };

        const auto [first_lo, first_hi] = extent(*row.front());
        (void)first_hi;
        if (first_lo > margin_px) {
            EndObservation e;
            e.row = r;
            e.side = BenchSide::left;
            e.seq = row.front()->seq;
            e.image_pos = row.front()->center();
            out.push_back(e);
        }
        const auto [last_lo, last_hi] = extent(*row.back());
        (void)last_lo;
        if (last_hi < image_width - 1 - margin_px) {
            EndObservation e;
            e.row = r;
            e.side = BenchSide::right;
            e.seq = row.back()->seq;
            e.image_pos = row.back()->center();
            out.push_back(e);
        }
    }
    return out;
}

std::vector<Vec2> detection_feature_points(const ModuleDetection& d) {
    std::vector<Vec2> pts;
    if (d.has_corners)
        pts.assign(d.corners.begin(), d.corners.end());
    else {
        const auto c = d.box.corners();
        pts.assign(c.begin(), c.end());
    }
    pts.push_back(d.center());
    return pts;
}

TrackUpdate track_modules(const std::vector<Track>& tracks,
                          const std::vector<FlowResult>& track_flow,
                          const SemanticStructure& detections, const TrackerParams& params,
                          long& next_track_id) {
    TrackUpdate out;
    out.detection_track.assign(detections.detections.size(), -1);

    double threshold = params.match_threshold;
    if (threshold <= 0) {
        const double short_side = std::min(detections.rep_width, detections.rep_height);
        threshold = short_side > 0 ? 0.25 * short_side : 20.0;
    }

    // predicted positions: flow displacement when valid, else coast on the
    // track's own recent motion
    std::vector<Vec2> predicted(tracks.size());
    std::vector<Vec2> shift(tracks.size());
    for (size_t i = 0; i < tracks.size(); ++i) {
        Vec2 d = tracks[i].velocity;
        if (i < track_flow.size() && track_flow[i].valid) d = track_flow[i].displacement;
        shift[i] = d;
        predicted[i] = tracks[i].center + d;
    }

    struct Pair {
        double dist;
        size_t track;
        size_t det;
    };
    std::vector<Pair> pairs;
    for (size_t ti = 0; ti < tracks.size(); ++ti)
        for (size_t di = 0; di < detections.detections.size(); ++di) {
            const double dist = (predicted[ti] - detections.detections[di].center()).norm();
            if (dist < threshold) pairs.push_back({dist, ti, di});
        }
    std::sort(pairs.begin(), pairs.end(), [](const Pair& a, const Pair& b) {
        if (a.dist != b.dist) return a.dist < b.dist;
        return std::tie(a.track, a.det) < std::tie(b.track, b.det);
    });

    std::vector<bool> track_used(tracks.size(), false);
    std::vector<bool> det_used(detections.detections.size(), false);
    std::vector<long> det_to_track(detections.detections.size(), -1);
    std::vector<int> track_match(tracks.size(), -1);
    for (const auto& p : pairs) {
        if (track_used[p.track] || det_used[p.det]) continue;
        track_used[p.track] = true;
        det_used[p.det] = true;
        track_match[p.track] = static_cast<int>(p.det);
        det_to_track[p.det] = tracks[p.track].id;
    }

    for (size_t ti = 0; ti < tracks.size(); ++ti) {
        Track t = tracks[ti];
        t.age += 1;
        if (track_match[ti] >= 0) {
            const ModuleDetection& d = detections.detections[track_match[ti]];
            const Vec2 new_center = d.center();
            t.velocity = new_center - t.center;
            t.center = new_center;
            t.points = detection_feature_points(d);
            t.row = d.row;
            t.seq = d.seq;
            t.missed = 0;
            out.tracks.push_back(std::move(t));
        } else {
            t.missed += 1;
            if (t.missed > params.max_missing) continue;  // track dropped
            t.center = predicted[ti];
            for (auto& p : t.points) p += shift[ti];
            t.velocity = shift[ti];
            out.tracks.push_back(std::move(t));
        }
    }

    for (size_t di = 0; di < detections.detections.size(); ++di) {
        if (det_used[di]) {
            out.detection_track[di] = det_to_track[di];
            continue;
        }
        const ModuleDetection& d = detections.detections[di];
        Track t;
        t.id = next_track_id++;
        t.center = d.center();
        t.points = detection_feature_points(d);
        t.row = d.row;
        t.seq = d.seq;
        out.tracks.push_back(t);
        out.detection_track[di] = t.id;
    }

    // carry detection row/seq onto matched entries of detection_track
    for (size_t di = 0; di < detections.detections.size(); ++di)
        if (det_used[di]) out.detection_track[di] = det_to_track[di];

    return out;
}

}  // namespace pvloc
