#pragma once
/**
 * @file anchors_tracking.hpp
 * @brief Visual anchor detection (bench ends, bench gaps) and persistent
 * module identities across frames via feature-displacement tracking.
 */

#include <string>
#include <vector>

#include "pvloc/image.hpp"
#include "pvloc/optical_flow.hpp"
#include "pvloc/plant_model.hpp"
#include "pvloc/structure.hpp"

namespace pvloc {

struct GapObservation {
    int row = 0;
    int seq_left = 0;   // flanking detected sequence positions
    int seq_right = 0;
    Vec2 image_pos = Vec2::Zero();
    double darkness = 0.0;  // candidate patch mean minus reference mean (negative = darker)
    double distance = 0.0;  // histogram distance to the intra-bench reference
};

struct GapDetectParams {
    double spacing_factor = 1.5;
    int hist_bins = 32;
    double confirm_threshold = 0.3;  // Bhattacharyya distance above this confirms
};

/// Two-step bench gap detection: spacing anomalies against the row median,
/// confirmed by histogram dissimilarity of the transition patch against the
/// median intra-bench transition plus a darker patch mean.
std::vector<GapObservation> detect_bench_gaps(const SemanticStructure& structure,
                                              const ImageU8& image,
                                              const GapDetectParams& params = {});

struct EndObservation {
    int row = 0;
    BenchSide side = BenchSide::left;
    int seq = 0;
    Vec2 image_pos = Vec2::Zero();
};

/// First/last detection per row, guarded by an image-border margin: an end is
/// only asserted when the outermost module is clear of the border.
std::vector<EndObservation> detect_bench_ends(const SemanticStructure& structure, int image_width,
                                              int image_height, double margin_px = 10.0);

/// A module identity persisting across frames.
struct Track {
    long id = -1;
    std::vector<Vec2> points;  // feature points: 4 corners (when known) + center
    Vec2 center = Vec2::Zero();
    int row = -1;
    int seq = -1;
    std::string module_id;  // model association, sticky once assigned
    int age = 1;            // frames since creation
    int missed = 0;         // consecutive frames without a detection
    Vec2 velocity = Vec2::Zero();  // px/frame, from recent matched motion
};

struct TrackerParams {
    double match_threshold = 0.0;  // [px]; <= 0 derives 25% of the rep short side
    int max_missing = 5;
};

struct TrackUpdate {
    std::vector<Track> tracks;
    std::vector<long> detection_track;  // per structure detection: track id
};

/// Greedy nearest-neighbour matching of predicted track positions against the
/// current detections; unmatched detections open new tracks (ids never
/// reused), unmatched tracks coast on their accumulated motion for up to
/// max_missing frames. `track_flow` carries one displacement per track (from
/// optical flow); invalid entries fall back to the track's own velocity.
TrackUpdate track_modules(const std::vector<Track>& tracks,
                          const std::vector<FlowResult>& track_flow,
                          const SemanticStructure& detections, const TrackerParams& params,
                          long& next_track_id);

/// Feature points of a detection: 4 corners (if present) plus center.
std::vector<Vec2> detection_feature_points(const ModuleDetection& d);

}  // namespace pvloc
