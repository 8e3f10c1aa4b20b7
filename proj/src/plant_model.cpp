#include "pvloc/plant_model.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

namespace pvloc {

using nlohmann::json;

std::array<Vec3, 4> PvModule::corners() const {
    const Vec3 du = axis_u * (width / 2.0);
    const Vec3 dv = axis_v * (height / 2.0);
    return {center - du + dv, center + du + dv, center + du - dv, center - du - dv};
}

const PvModule* PlantModel::find_module(const std::string& id) const {
    for (const auto& m : modules)
        if (m.id == id) return &m;
    return nullptr;
}

const Bench* PlantModel::find_bench(const std::string& id) const {
    for (const auto& b : benches)
        if (b.id == id) return &b;
    return nullptr;
}

const AnchorPoint* PlantModel::find_anchor(const std::string& id) const {
    for (const auto& a : anchors)
        if (a.id == id) return &a;
    return nullptr;
}

namespace {

double intra_row_pitch(const PlantModel& model, const Bench& bench, int row) {
    const auto& ids = bench.grid.at(row);
    if (ids.size() < 2) {
        const PvModule* m = model.find_module(ids.front());
        return m ? m->width : 0.0;
    }
    std::vector<double> d;
    for (size_t i = 0; i + 1 < ids.size(); ++i) {
        const PvModule* a = model.find_module(ids[i]);
        const PvModule* b = model.find_module(ids[i + 1]);
        if (a && b) d.push_back((b->center - a->center).norm());
    }
    std::sort(d.begin(), d.end());
    return d.empty() ? 0.0 : d[d.size() / 2];
}

}  // namespace

void PlantModel::validate() const {
    std::set<std::string> ids;
    for (const auto& m : modules) {
        if (!ids.insert(m.id).second) throw std::runtime_error("duplicate id: " + m.id);
        if (m.width <= 0.0) throw std::runtime_error("module " + m.id + ": non-positive width");
        if (m.height <= 0.0) throw std::runtime_error("module " + m.id + ": non-positive height");
        if (std::abs(m.axis_u.norm() - 1.0) > 1e-6 || std::abs(m.normal.norm() - 1.0) > 1e-6 ||
            std::abs(m.axis_v.norm() - 1.0) > 1e-6)
            throw std::runtime_error("module " + m.id + ": axes not unit length");
        if (std::abs(m.axis_u.dot(m.normal)) > 1e-6 || std::abs(m.axis_v.dot(m.normal)) > 1e-6 ||
            std::abs(m.axis_u.dot(m.axis_v)) > 1e-6)
            throw std::runtime_error("module " + m.id + ": axes not orthogonal");
    }
    std::set<std::string> bench_ids;
    for (const auto& b : benches) {
        if (!bench_ids.insert(b.id).second) throw std::runtime_error("duplicate bench id: " + b.id);
        if (b.grid.empty()) throw std::runtime_error("bench " + b.id + ": empty grid");
        const size_t cols = b.grid.front().size();
        for (size_t r = 0; r < b.grid.size(); ++r) {
            if (b.grid[r].size() != cols)
                throw std::runtime_error("bench " + b.id + ": ragged grid");
            for (const auto& id : b.grid[r]) {
                if (!ids.count(id))
                    throw std::runtime_error("bench " + b.id + " references unknown module: " + id);
            }
            // row coplanarity against the first module's plane
            const PvModule* first = find_module(b.grid[r].front());
            for (const auto& id : b.grid[r]) {
                const PvModule* m = find_module(id);
                if (std::abs((m->center - first->center).dot(first->normal)) > coplanar_tolerance)
                    throw std::runtime_error("bench " + b.id + " row " + std::to_string(r) +
                                             ": module " + id + " off the row plane");
            }
        }
    }
    std::set<std::string> anchor_ids;
    for (const auto& a : anchors) {
        if (!anchor_ids.insert(a.id).second)
            throw std::runtime_error("duplicate anchor id: " + a.id);
        if (!find_bench(a.bench)) throw std::runtime_error("anchor " + a.id + ": unknown bench");
        for (const auto& id : a.modules)
            if (!find_module(id))
                throw std::runtime_error("anchor " + a.id + " references unknown module: " + id);
        if (a.kind == AnchorKind::bench_gap) {
            if (a.modules.size() != 2)
                throw std::runtime_error("anchor " + a.id + ": gap needs two modules");
            const PvModule* lhs = find_module(a.modules[0]);
            const PvModule* rhs = find_module(a.modules[1]);
            const double spacing = (rhs->center - lhs->center).norm();
            const double pitch = intra_row_pitch(*this, *find_bench(a.bench), a.row);
            if (spacing <= pitch)
                throw std::runtime_error("anchor " + a.id +
                                         ": gap spacing not greater than module pitch");
        }
    }
}

namespace {

Vec3 parse_vec3(const json& j, const std::string& what) {
    if (!j.is_array() || j.size() != 3)
        throw std::runtime_error("expected 3-element array for " + what);
    return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

}  // namespace

PlantModel parse_plant_model(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw std::runtime_error(std::string("model parse error: ") + e.what());
    }
    if (j.value("version", 0) != 1) throw std::runtime_error("unsupported model version");

    PlantModel model;
    model.frame = j.value("frame", std::string("local-enu-meters"));
    model.coplanar_tolerance = j.value("coplanar_tolerance", 0.02);

    for (const auto& jm : j.at("modules")) {
        PvModule m;
        m.id = jm.at("id").get<std::string>();
        m.center = parse_vec3(jm.at("center"), "center of " + m.id);
        m.normal = parse_vec3(jm.at("normal"), "normal of " + m.id);
        m.axis_u = parse_vec3(jm.at("axis_u"), "axis_u of " + m.id);
        m.width = jm.at("width").get<double>();
        m.height = jm.at("height").get<double>();
        if (std::abs(m.normal.norm() - 1.0) > 1e-6 || std::abs(m.axis_u.norm() - 1.0) > 1e-6)
            throw std::runtime_error("module " + m.id + ": axes not unit length");
        if (std::abs(m.normal.dot(m.axis_u)) > 1e-6)
            throw std::runtime_error("module " + m.id + ": axis_u not orthogonal to normal");
        // exact re-orthonormalization after the tolerance check
        m.normal.normalize();
        m.axis_u = (m.axis_u - m.normal * m.normal.dot(m.axis_u)).normalized();
        m.axis_v = m.normal.cross(m.axis_u);
        model.modules.push_back(std::move(m));
    }

    for (const auto& jb : j.value("benches", json::array())) {
        Bench b;
        b.id = jb.at("id").get<std::string>();
        for (const auto& jr : jb.at("grid")) {
            std::vector<std::string> row;
            for (const auto& cell : jr) row.push_back(cell.get<std::string>());
            b.grid.push_back(std::move(row));
        }
        model.benches.push_back(std::move(b));
    }

    for (const auto& ja : j.value("anchors", json::array())) {
        AnchorPoint a;
        a.id = ja.at("id").get<std::string>();
        const std::string kind = ja.at("kind").get<std::string>();
        if (kind == "bench_end")
            a.kind = AnchorKind::bench_end;
        else if (kind == "bench_gap")
            a.kind = AnchorKind::bench_gap;
        else
            throw std::runtime_error("anchor " + a.id + ": unknown kind " + kind);
        a.bench = ja.at("bench").get<std::string>();
        a.row = ja.at("row").get<int>();
        if (a.kind == AnchorKind::bench_gap) {
            const auto& between = ja.at("between");
            a.modules = {between.at(0).get<std::string>(), between.at(1).get<std::string>()};
        } else {
            a.modules = {ja.at("module").get<std::string>()};
        }
        model.anchors.push_back(std::move(a));
    }

    model.validate();

    // derived anchor geometry
    for (auto& a : model.anchors) {
        if (a.kind == AnchorKind::bench_gap) {
            const PvModule* lhs = model.find_module(a.modules[0]);
            const PvModule* rhs = model.find_module(a.modules[1]);
            a.position = (lhs->center + rhs->center) / 2.0;
        } else {
            const Bench* b = model.find_bench(a.bench);
            if (a.row < 0 || a.row >= b->rows())
                throw std::runtime_error("anchor " + a.id + ": row out of bench range");
            const auto& row = b->grid[a.row];
            const PvModule* m = model.find_module(a.modules[0]);
            if (row.front() == a.modules[0]) {
                a.side = BenchSide::left;
                a.position = m->center - m->axis_u * (m->width / 2.0);
            } else if (row.back() == a.modules[0]) {
                a.side = BenchSide::right;
                a.position = m->center + m->axis_u * (m->width / 2.0);
            } else {
                throw std::runtime_error("anchor " + a.id + ": module not at a row end");
            }
        }
    }
    return model;
}

PlantModel load_plant_model(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("cannot open model file: " + path);
    std::ostringstream ss;
    ss << f.rdbuf();
    return parse_plant_model(ss.str());
}

void save_plant_model(const PlantModel& model, const std::string& path) {
    json j;
    j["version"] = 1;
    j["frame"] = model.frame;
    j["coplanar_tolerance"] = model.coplanar_tolerance;
    j["modules"] = json::array();
    for (const auto& m : model.modules) {
        json jm;
        jm["id"] = m.id;
        jm["center"] = {m.center.x(), m.center.y(), m.center.z()};
        jm["normal"] = {m.normal.x(), m.normal.y(), m.normal.z()};
        jm["axis_u"] = {m.axis_u.x(), m.axis_u.y(), m.axis_u.z()};
        jm["width"] = m.width;
        jm["height"] = m.height;
        j["modules"].push_back(jm);
    }
    j["benches"] = json::array();
    for (const auto& b : model.benches) {
        json jb;
        jb["id"] = b.id;
        jb["grid"] = b.grid;
        j["benches"].push_back(jb);
    }
    j["anchors"] = json::array();
    for (const auto& a : model.anchors) {
        json ja;
        ja["id"] = a.id;
        ja["kind"] = a.kind == AnchorKind::bench_gap ? "bench_gap" : "bench_end";
        ja["bench"] = a.bench;
        ja["row"] = a.row;
        if (a.kind == AnchorKind::bench_gap)
            ja["between"] = {a.modules[0], a.modules[1]};
        else
            ja["module"] = a.modules[0];
        j["anchors"].push_back(ja);
    }
    std::ofstream f(path);
    if (!f) throw std::runtime_error("cannot open for writing: " + path);
    f << j.dump(2) << "\n";
}

std::array<Vec3, 4> module_world_corners(const PlantModel& model, const std::string& id) {
    const PvModule* m = model.find_module(id);
    if (!m) throw std::runtime_error("unknown module id: " + id);
    return m->corners();
}

int RowLayout::column_of(const PlantModel& model, const std::string& module_id) const {
    for (size_t c = 0; c < columns.size(); ++c) {
        const auto& [bi, col] = columns[c];
        for (const auto& row : model.benches[bi].grid)
            if (row[col] == module_id) return static_cast<int>(c);
    }
    return -1;
}

const std::string& RowLayout::module_at(const PlantModel& model, int row, int combined_col) const {
    const auto& [bi, col] = columns.at(combined_col);
    return model.benches[bi].grid.at(row).at(col);
}

RowLayout build_row_layout(const PlantModel& model) {
    RowLayout layout;
    if (model.benches.empty()) return layout;
    layout.rows = model.benches.front().rows();
    for (const auto& b : model.benches)
        if (b.rows() != layout.rows)
            throw std::runtime_error("benches have differing row counts; not a single row layout");

    // order benches along the common row axis
    const PvModule* ref = model.find_module(model.benches.front().grid.front().front());
    const Vec3 axis = ref->axis_u;
    std::vector<std::pair<double, int>> order;
    for (size_t i = 0; i < model.benches.size(); ++i) {
        const PvModule* first = model.find_module(model.benches[i].grid.front().front());
        order.emplace_back(first->center.dot(axis), static_cast<int>(i));
    }
    std::sort(order.begin(), order.end());
    for (const auto& [key, idx] : order) {
        (void)key;
        layout.bench_order.push_back(idx);
        const Bench& b = model.benches[idx];
        for (int c = 0; c < b.cols(); ++c) layout.columns.emplace_back(idx, c);
    }
    return layout;
}

std::optional<std::string> AssociationMap::lookup(int row, int seq) const {
    auto it = mapping.find({row, seq});
    if (it == mapping.end()) return std::nullopt;
    return it->second;
}

namespace {

/// Walks seq positions from the aligned anchor position, collapsing confirmed
/// gap intervals to a single combined-column step.
int combined_col_of_seq(int seq, int anchor_seq, int anchor_col,
                        const std::vector<std::pair<int, int>>& gaps) {
    int s = anchor_seq;
    int c = anchor_col;
    while (s < seq) {
        bool jumped = false;
        for (const auto& [gl, gr] : gaps) {
            if (gl == s && gr <= seq) {
                s = gr;
                c += 1;
                jumped = true;
                break;
            }
        }
        if (!jumped) {
            s += 1;
            c += 1;
        }
    }
    while (s > seq) {
        bool jumped = false;
        for (const auto& [gl, gr] : gaps) {
            if (gr == s && gl >= seq) {
                s = gl;
                c -= 1;
                jumped = true;
                break;
            }
        }
        if (!jumped) {
            s -= 1;
            c -= 1;
        }
    }
    return c;
}

AssociationMap associate_with_anchor(const SemanticStructure& structure,
                                     const AnchorObservation& obs, const PlantModel& model,
                                     const RowLayout& layout, const AnchorPoint& anchor,
                                     const std::vector<GapInterval>& confirmed_gaps) {
    AssociationMap out;
    out.anchor_id = anchor.id;

    const int row_offset = anchor.row - obs.row;

    // anchor's combined column and the structure seq aligned with it
    int anchor_col = 0;
    int anchor_seq = 0;
    if (anchor.kind == AnchorKind::bench_end) {
        anchor_col = layout.column_of(model, anchor.modules[0]);
        anchor_seq = obs.seq;
    } else {
        anchor_col = layout.column_of(model, anchor.modules[0]);
        anchor_seq = obs.seq_left;
    }
    if (anchor_col < 0) throw std::runtime_error("anchor module not found in row layout");

    // structure-wide gap intervals (a bench gap physically spans all rows)
    std::vector<std::pair<int, int>> gaps;
    for (const auto& g : confirmed_gaps) gaps.emplace_back(g.seq_left, g.seq_right);
    if (obs.kind == AnchorKind::bench_gap) gaps.emplace_back(obs.seq_left, obs.seq_right);
    std::sort(gaps.begin(), gaps.end());
    gaps.erase(std::unique(gaps.begin(), gaps.end()), gaps.end());

    std::set<std::string> used;
    for (const auto& det : structure.detections) {
        if (det.row < 0 || det.seq < 0) continue;
        const int model_row = det.row + row_offset;
        if (model_row < 0 || model_row >= layout.rows)
            throw std::runtime_error("extent overflow: structure row " + std::to_string(det.row) +
                                     " maps outside the model");
        const int col = combined_col_of_seq(det.seq, anchor_seq, anchor_col, gaps);
        if (col < 0 || col >= layout.total_columns()) {
            out.overflow.emplace_back(det.row, det.seq);
            continue;
        }
        const std::string& id = layout.module_at(model, model_row, col);
        if (!used.insert(id).second)
            throw std::runtime_error("association not injective at module " + id);
        out.mapping[{det.row, det.seq}] = id;
    }
    out.valid = !out.mapping.empty();
    return out;
}

}  // namespace

AssociationMap associate_structure(const SemanticStructure& structure,
                                   const AnchorObservation& obs, const PlantModel& model,
                                   const std::vector<GapInterval>& confirmed_gaps) {
    const RowLayout layout = build_row_layout(model);

    std::vector<const AnchorPoint*> candidates;
    if (!obs.hint.empty()) {
        const AnchorPoint* a = model.find_anchor(obs.hint);
        if (!a) throw std::runtime_error("unknown anchor hint: " + obs.hint);
        if (a->kind != obs.kind) throw std::runtime_error("anchor hint kind mismatch: " + obs.hint);
        candidates.push_back(a);
    } else {
        for (const auto& a : model.anchors) {
            if (a.kind != obs.kind) continue;
            if (obs.kind == AnchorKind::bench_end && a.side != obs.side) continue;
            candidates.push_back(&a);
        }
    }

    AssociationMap result;
    const AnchorPoint* chosen = nullptr;
    for (const AnchorPoint* a : candidates) {
        AssociationMap m;
        try {
            m = associate_with_anchor(structure, obs, model, layout, *a, confirmed_gaps);
        } catch (const std::runtime_error&) {
            if (candidates.size() == 1) throw;
            continue;  // candidate rejected by extent; keep searching
        }
        if (!m.valid) continue;
        if (chosen)
            throw std::runtime_error("ambiguous anchor: both " + chosen->id + " and " + a->id +
                                     " satisfy the observation");
        chosen = a;
        result = std::move(m);
    }
    if (!chosen) throw std::runtime_error("no model anchor satisfies the observation");
    return result;
}

}  // namespace pvloc
