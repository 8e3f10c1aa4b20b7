#pragma once
/**
 * @file plant_model.hpp
 * @brief Power plant model: module geometry, bench layout, anchor points, and
 * association of detected semantic structures with the model.
 *
 * The model is immutable after load and safe to share across pipeline stages;
 * association is a pure function.
 */

#include <array>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "pvloc/geometry.hpp"
#include "pvloc/structure.hpp"

namespace pvloc {

/// One PV module: center, orientation frame and dimensions in meters.
struct PvModule {
    std::string id;
    Vec3 center = Vec3::Zero();
    Vec3 normal = Vec3::UnitZ();
    Vec3 axis_u = Vec3::UnitX();  // in-plane, along the row
    Vec3 axis_v = Vec3::UnitY();  // in-plane, derived as normal x axis_u
    double width = 0.0;           // extent along axis_u [m]
    double height = 0.0;          // extent along axis_v [m]

    /// Corners ordered TL, TR, BR, BL in the module's u/v frame:
    /// center +/- (w/2) axis_u +/- (h/2) axis_v.
    std::array<Vec3, 4> corners() const;
};

/// A mounting structure holding a rows x columns grid of modules.
/// grid[row][col] = module id; row 0 is the top row.
struct Bench {
    std::string id;
    std::vector<std::vector<std::string>> grid;

    int rows() const { return static_cast<int>(grid.size()); }
    int cols() const { return grid.empty() ? 0 : static_cast<int>(grid.front().size()); }
};

enum class AnchorKind { bench_end, bench_gap };
enum class BenchSide { left, right };

/// Visually recognizable navigation landmark used to initialize association.
struct AnchorPoint {
    std::string id;
    AnchorKind kind = AnchorKind::bench_end;
    std::string bench;                 // owning bench (gap: the left bench)
    int row = 0;
    std::vector<std::string> modules;  // end: the end module; gap: {left, right}
    Vec3 position = Vec3::Zero();      // derived at load
    BenchSide side = BenchSide::left;  // bench_end only, derived at load
};

/// World-frame plant model. Meters, right-handed, z-up.
struct PlantModel {
    std::string frame = "local-enu-meters";
    std::vector<PvModule> modules;
    std::vector<Bench> benches;
    std::vector<AnchorPoint> anchors;
    double coplanar_tolerance = 0.02;  // [m] per bench row

    const PvModule* find_module(const std::string& id) const;
    const Bench* find_bench(const std::string& id) const;
    const AnchorPoint* find_anchor(const std::string& id) const;

    /// Validates all invariants; throws std::runtime_error naming the offender.
    void validate() const;
};

PlantModel load_plant_model(const std::string& path);
void save_plant_model(const PlantModel& model, const std::string& path);

/// Parse from an already-loaded JSON string (shared by load and the tests).
PlantModel parse_plant_model(const std::string& json_text);

/// Corners of one module, ordered TL, TR, BR, BL. Throws on unknown id.
std::array<Vec3, 4> module_world_corners(const PlantModel& model, const std::string& id);

/// Benches of one physical row ordered along the flight axis, with a combined
/// column numbering that is contiguous across bench gaps.
struct RowLayout {
    std::vector<int> bench_order;            // indices into model.benches
    std::vector<std::pair<int, int>> columns;  // combined col -> (bench index, col in bench)
    int rows = 0;

    int total_columns() const { return static_cast<int>(columns.size()); }
    /// Combined column of a module id, or -1.
    int column_of(const PlantModel& model, const std::string& module_id) const;
    const std::string& module_at(const PlantModel& model, int row, int combined_col) const;
};

RowLayout build_row_layout(const PlantModel& model);

/// An anchor sighting inside a semantic structure.
struct AnchorObservation {
    AnchorKind kind = AnchorKind::bench_end;
    int row = 0;              // structure row where observed
    BenchSide side = BenchSide::left;  // bench_end only
    int seq = 0;              // bench_end: seq of the end detection
    int seq_left = 0;         // bench_gap: flanking detected positions
    int seq_right = 0;
    std::string hint;         // candidate anchor id; empty = search all of `kind`
};

/// Confirmed bench-gap interval in structure coordinates, used to collapse the
/// inserted skip slots when mapping sequence positions across a gap.
struct GapInterval {
    int row = 0;
    int seq_left = 0;
    int seq_right = 0;
};

/// Mapping from detection logical coordinates to model module ids.
struct AssociationMap {
    std::map<std::pair<int, int>, std::string> mapping;  // (row, seq) -> module id
    std::string anchor_id;
    bool valid = false;
    std::vector<std::pair<int, int>> overflow;  // flagged, not mapped

    std::optional<std::string> lookup(int row, int seq) const;
};

/// Aligns a structure with the model through an anchor observation.
/// Throws on ambiguous anchor or row-extent overflow.
AssociationMap associate_structure(const SemanticStructure& structure,
                                   const AnchorObservation& anchor_obs, const PlantModel& model,
                                   const std::vector<GapInterval>& confirmed_gaps = {});

}  // namespace pvloc
