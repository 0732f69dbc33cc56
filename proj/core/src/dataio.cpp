#include "dmsnet/dataio.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "dmsnet/errors.hpp"

namespace dmsnet {

using nlohmann::json;

namespace {

// Stream purposes for SampleRng.
constexpr std::uint64_t kSplitStream = 1;
constexpr std::uint64_t kAugmentStream = 2;

constexpr const char* kManifestFormat = "dmsnet-manifest/1";

std::string trim(std::string s) {
    const auto not_space = [](unsigned char c) { return !std::isspace(c); };
    s.erase(s.begin(), std::find_if(s.begin(), s.end(), not_space));
    s.erase(std::find_if(s.rbegin(), s.rend(), not_space).base(), s.end());
    return s;
}

// RFC 4180 style record splitter; handles quoted fields with embedded commas,
// doubled quotes and newlines.
std::vector<std::vector<std::string>> parse_csv(std::istream& in) {
    std::vector<std::vector<std::string>> records;
    std::vector<std::string> record;
    std::string field;
    bool quoted = false, field_started = false;
    char c;
    auto end_field = [&] {
        record.push_back(field);
        field.clear();
        field_started = false;
    };
    auto end_record = [&] {
        end_field();
        const bool blank = record.size() == 1 && trim(record[0]).empty();
        if (!blank) records.push_back(std::move(record));
        record.clear();
    };
    while (in.get(c)) {
        if (quoted) {
            if (c == '"') {
                if (in.peek() == '"') {
                    in.get(c);
                    field.push_back('"');
                } else {
                    quoted = false;
                }
            } else {
                field.push_back(c);
            }
        } else if (c == '"' && !field_started) {
            quoted = true;
            field_started = true;
        } else if (c == ',') {
            end_field();
        } else if (c == '\n') {
            end_record();
        } else if (c != '\r') {
            field.push_back(c);
            field_started = true;
        }
    }
    if (field_started || !field.empty() || !record.empty()) end_record();
    return records;
}

int parse_int(const std::string& text, const std::string& what) {
    const auto t = trim(text);
    if (t.empty()) return 0;
    try {
        std::size_t used = 0;
        const int v = std::stoi(t, &used);
        if (used != t.size()) throw std::invalid_argument(t);
        return v;
    } catch (const std::exception&) {
        throw SchemaError(what + ": expected an integer, got '" + t + "'");
    }
}

}  // namespace

std::string to_string(Provenance p) { return p == Provenance::original ? "original" : "augmented"; }

std::string to_string(Partition p) {
    switch (p) {
        case Partition::train: return "train";
        case Partition::val: return "val";
        case Partition::test: return "test";
    }
    return "train";
}

Partition partition_from_string(std::string_view text) {
    if (text == "train") return Partition::train;
    if (text == "val") return Partition::val;
    if (text == "test") return Partition::test;
    throw ConfigError("unknown partition '" + std::string(text) + "' (expected train|val|test)");
}

// ---------------------------------------------------------------------------
// index

OdirIndex load_odir_index(const fs::path& csv_path, const fs::path& image_dir) {
    std::ifstream in(csv_path, std::ios::binary);
    if (!in) throw PathError("cannot open ODIR index: " + csv_path.string());
    const auto records = parse_csv(in);
    if (records.empty()) throw EmptyDatasetError("ODIR index is empty: " + csv_path.string());

    std::map<std::string, std::size_t> column;
    for (std::size_t i = 0; i < records[0].size(); ++i) {
        auto name = trim(records[0][i]);
        if (i == 0 && name.rfind("\xEF\xBB\xBF", 0) == 0) name = name.substr(3);  // UTF-8 BOM
        column.emplace(name, i);
    }
    std::vector<std::string> required{"ID", "Patient Age", "Patient Sex", "Left-Fundus", "Right-Fundus"};
    for (auto name : kClassNames) required.emplace_back(name);
    std::vector<std::string> missing;
    for (const auto& name : required) {
        if (!column.count(name)) missing.push_back(name);
    }
    if (!missing.empty()) {
        std::string list;
        for (const auto& m : missing) list += (list.empty() ? "" : ", ") + m;
        throw SchemaError("ODIR index " + csv_path.string() + " lacks required column(s): " + list);
    }
    if (records.size() < 2) throw EmptyDatasetError("ODIR index has no data rows: " + csv_path.string());

    const fs::path root = image_dir.empty() ? csv_path.parent_path() : image_dir;
    OdirIndex index;
    for (std::size_t r = 1; r < records.size(); ++r) {
        const auto& row = records[r];
        auto cell = [&](const std::string& name) -> std::string {
            const auto i = column.at(name);
            return i < row.size() ? trim(row[i]) : std::string{};
        };
        const std::string where = csv_path.filename().string() + ":" + std::to_string(r + 1);
        ++index.report.rows;

        PairedSample s;
        s.patient_id = cell("ID");
        if (s.patient_id.empty()) throw SchemaError(where + ": empty ID");
        s.age = parse_int(cell("Patient Age"), where + " Patient Age");
        s.sex = cell("Patient Sex");
        for (std::size_t c = 0; c < kClassNames.size(); ++c) {
            const int v = parse_int(cell(std::string(kClassNames[c])), where + " " + std::string(kClassNames[c]));
            if (v != 0 && v != 1) throw SchemaError(where + ": label columns must be 0 or 1");
            s.labels.bits[c] = static_cast<std::uint8_t>(v);
        }
        s.source_ids = {s.patient_id};

        const auto left = cell("Left-Fundus"), right = cell("Right-Fundus");
        s.left_path = root / left;
        s.right_path = root / right;
        if (left.empty() || right.empty() || !fs::is_regular_file(s.left_path) || !fs::is_regular_file(s.right_path)) {
            ++index.report.skipped;
            index.report.skipped_rows.push_back({s.patient_id, "missing_image"});
            continue;
        }
        index.samples.push_back(std::move(s));
    }
    return index;
}

// ---------------------------------------------------------------------------
// randomness

SampleRng::SampleRng(std::uint64_t seed, std::uint64_t purpose, std::uint64_t index) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(purpose), static_cast<std::uint32_t>(index),
                      static_cast<std::uint32_t>(index >> 32)};
    engine_.seed(seq);
}

double SampleRng::uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

std::uint64_t SampleRng::below(std::uint64_t n) {
    if (n == 0) return 0;
    // rejection sampling keeps the result unbiased
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() - std::numeric_limits<std::uint64_t>::max() % n;
    std::uint64_t x;
    do {
        x = engine_();
    } while (x >= limit);
    return x % n;
}

// ---------------------------------------------------------------------------
// images

cv::Mat read_rgb(const fs::path& path) {
    if (!fs::is_regular_file(path)) throw PathError("image not found: " + path.string());
    cv::Mat bgr = cv::imread(path.string(), cv::IMREAD_COLOR);
    if (bgr.empty()) throw FormatError("cannot decode image: " + path.string());
    cv::Mat rgb;
    cv::cvtColor(bgr, rgb, cv::COLOR_BGR2RGB);
    return rgb;
}

void write_rgb(const fs::path& path, const cv::Mat& rgb) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    cv::Mat bgr;
    cv::cvtColor(rgb, bgr, cv::COLOR_RGB2BGR);
    if (!cv::imwrite(path.string(), bgr)) throw PathError("cannot write image: " + path.string());
}

cv::Mat illumination_correct(const cv::Mat& rgb) {
    if (rgb.empty() || rgb.type() != CV_8UC3) {
        throw FormatError("illumination_correct: expected an 8-bit 3-channel RGB image");
    }
    cv::Mat image;
    rgb.convertTo(image, CV_64FC3);
    const double sigma = static_cast<double>(rgb.cols) / 30.0;
    cv::Mat background;
    cv::GaussianBlur(image, background, cv::Size(0, 0), sigma, sigma, cv::BORDER_REFLECT);
    const cv::Scalar channel_mean = cv::mean(image);
    cv::Mat corrected = image - background + channel_mean;
    cv::Mat out;
    corrected.convertTo(out, CV_8UC3);  // rounds and saturates to [0, 255]
    return out;
}

cv::Mat resize_center_crop(const cv::Mat& image, int resolution) {
    if (image.empty()) throw FormatError("resize_center_crop: empty image");
    if (resolution <= 0) throw ConfigError("resize_center_crop: resolution must be positive");
    if (image.cols == resolution && image.rows == resolution) return image.clone();
    const double scale = static_cast<double>(resolution) / std::min(image.cols, image.rows);
    const int w = std::max(resolution, static_cast<int>(std::lround(image.cols * scale)));
    const int h = std::max(resolution, static_cast<int>(std::lround(image.rows * scale)));
    cv::Mat resized;
    cv::resize(image, resized, cv::Size(w, h), 0, 0, scale < 1.0 ? cv::INTER_AREA : cv::INTER_LINEAR);
    const cv::Rect roi((w - resolution) / 2, (h - resolution) / 2, resolution, resolution);
    return resized(roi).clone();
}

// ---------------------------------------------------------------------------
// CutMix

CutBox sample_cut_box(int width, int height, SampleRng& rng) {
    const double lambda = rng.uniform();  // Beta(1, 1)
    const double cut_ratio = std::sqrt(1.0 - lambda);
    const int cut_w = static_cast<int>(width * cut_ratio);
    const int cut_h = static_cast<int>(height * cut_ratio);
    const int cx = static_cast<int>(rng.below(static_cast<std::uint64_t>(width)));
    const int cy = static_cast<int>(rng.below(static_cast<std::uint64_t>(height)));
    CutBox box;
    box.x0 = std::clamp(cx - cut_w / 2, 0, width);
    box.y0 = std::clamp(cy - cut_h / 2, 0, height);
    box.x1 = std::clamp(cx + cut_w / 2, 0, width);
    box.y1 = std::clamp(cy + cut_h / 2, 0, height);
    return box;
}

std::string augmented_id(const std::string& base_id, const std::string& donor_id, int serial) {
    return "aug_" + base_id + "_" + donor_id + "_" + std::to_string(serial);
}

CutMixResult paired_cutmix(const PairedSample& base, const PairedImages& base_images, const PairedSample& donor,
                           const PairedImages& donor_images, SampleRng& rng, int serial) {
    if (base.labels != donor.labels) {
        throw HomogeneityError("CutMix donor " + donor.patient_id + " (" + donor.labels.key() + ") does not share the label of " +
                               base.patient_id + " (" + base.labels.key() + ")");
    }
    const cv::Size size = base_images.left.size();
    for (const cv::Mat* m : {&base_images.right, &donor_images.left, &donor_images.right}) {
        if (m->size() != size || m->type() != base_images.left.type()) {
            throw FormatError("CutMix requires all four images at one common resolution and type");
        }
    }

    CutMixResult out;
    out.box = sample_cut_box(size.width, size.height, rng);
    out.images.left = base_images.left.clone();
    out.images.right = base_images.right.clone();
    if (out.box.area() > 0) {
        const cv::Rect roi(out.box.x0, out.box.y0, out.box.x1 - out.box.x0, out.box.y1 - out.box.y0);
        donor_images.left(roi).copyTo(out.images.left(roi));
        donor_images.right(roi).copyTo(out.images.right(roi));
    }

    out.sample = base;
    out.sample.patient_id = augmented_id(base.patient_id, donor.patient_id, serial);
    out.sample.provenance = Provenance::augmented;
    out.sample.source_ids = {base.patient_id, donor.patient_id};
    return out;
}

// ---------------------------------------------------------------------------
// split

namespace {

class DisjointSets {
public:
    explicit DisjointSets(std::size_t n) : parent_(n) { std::iota(parent_.begin(), parent_.end(), std::size_t{0}); }
    std::size_t find(std::size_t x) {
        while (parent_[x] != x) x = parent_[x] = parent_[parent_[x]];
        return x;
    }
    void unite(std::size_t a, std::size_t b) {
        a = find(a);
        b = find(b);
        if (a != b) parent_[std::max(a, b)] = std::min(a, b);
    }

private:
    std::vector<std::size_t> parent_;
};

std::array<std::size_t, 3> apportion(std::size_t n, const std::array<double, 3>& ratios) {
    std::array<std::size_t, 3> counts{};
    std::array<double, 3> frac{};
    std::size_t assigned = 0;
    for (std::size_t p = 0; p < 3; ++p) {
        const double raw = static_cast<double>(n) * ratios[p];
        counts[p] = static_cast<std::size_t>(std::floor(raw + 1e-9));
        frac[p] = raw - static_cast<double>(counts[p]);
        assigned += counts[p];
    }
    std::array<std::size_t, 3> order{0, 1, 2};
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return frac[a] > frac[b] + 1e-12; });
    for (std::size_t i = 0; assigned < n; ++i, ++assigned) ++counts[order[i % 3]];
    return counts;
}

}  // namespace

SplitManifest stratified_split(std::span<const PairedSample> samples, std::array<double, 3> ratios,
                               std::uint64_t seed) {
    double sum = 0.0;
    for (double r : ratios) {
        if (!(r > 0.0)) throw ConfigError("stratified_split: ratios must be positive");
        sum += r;
    }
    if (std::abs(sum - 1.0) > 1e-9) throw ConfigError("stratified_split: ratios must sum to 1");

    SplitManifest manifest;
    manifest.seed = seed;
    manifest.ratios = ratios;

    std::map<std::string, std::size_t> by_id;
    for (std::size_t i = 0; i < samples.size(); ++i) {
        if (!by_id.emplace(samples[i].patient_id, i).second) {
            throw DataError("stratified_split: duplicate patient id " + samples[i].patient_id);
        }
    }
    DisjointSets sets(samples.size());
    for (std::size_t i = 0; i < samples.size(); ++i) {
        for (const auto& src : samples[i].source_ids) {
            auto it = by_id.find(src);
            if (it != by_id.end()) sets.unite(i, it->second);
        }
    }

    // group root -> members (input order); class key -> group roots (first-seen order)
    std::map<std::size_t, std::vector<std::size_t>> members;
    std::map<std::string, std::vector<std::size_t>> groups_by_class;
    for (std::size_t i = 0; i < samples.size(); ++i) {
        const auto root = sets.find(i);
        auto& m = members[root];
        if (m.empty()) groups_by_class[samples[root].labels.key()].push_back(root);
        m.push_back(i);
    }

    std::uint64_t class_ordinal = 0;
    for (auto& [key, groups] : groups_by_class) {
        SampleRng rng(seed, kSplitStream, class_ordinal++);
        for (std::size_t i = groups.size(); i > 1; --i) std::swap(groups[i - 1], groups[rng.below(i)]);

        auto originals = [&](std::size_t root) {
            return static_cast<std::size_t>(std::count_if(members[root].begin(), members[root].end(), [&](std::size_t i) {
                return samples[i].provenance == Provenance::original;
            }));
        };
        std::size_t n = 0;
        for (auto g : groups) n += originals(g);
        if (n < 3) {
            manifest.warnings.push_back("class " + key + " has " + std::to_string(n) +
                                        " original sample(s), fewer than the 3 partitions");
        }
        const auto target = apportion(n, ratios);
        std::array<std::size_t, 3> filled{};
        for (auto g : groups) {
            std::size_t best = 0;
            long best_deficit = std::numeric_limits<long>::min();
            for (std::size_t p = 0; p < 3; ++p) {
                const long deficit = static_cast<long>(target[p]) - static_cast<long>(filled[p]);
                if (deficit > best_deficit) {
                    best_deficit = deficit;
                    best = p;
                }
            }
            filled[best] += originals(g);
            for (auto i : members[g]) manifest.assignment[samples[i].patient_id] = static_cast<Partition>(best);
        }
    }
    return manifest;
}

void check_no_leakage(const SplitManifest& manifest, std::span<const PairedSample> samples) {
    for (const auto& s : samples) {
        auto own = manifest.assignment.find(s.patient_id);
        if (own == manifest.assignment.end()) throw DataError("split leaves " + s.patient_id + " unassigned");
        for (const auto& src : s.source_ids) {
            auto it = manifest.assignment.find(src);
            if (it == manifest.assignment.end()) {
                throw DataError("source " + src + " of " + s.patient_id + " is not assigned to any partition");
            }
            if (it->second != own->second) {
                throw DataError("augmented sample " + s.patient_id + " (" + to_string(own->second) + ") crosses into " +
                                to_string(it->second) + " through source " + src);
            }
        }
    }
}

// ---------------------------------------------------------------------------
// prepared datasets

std::vector<PairedSample> PreparedDataset::partition(Partition p) const {
    std::vector<PairedSample> out;
    for (const auto& s : samples) {
        if (s.partition == p) out.push_back(s.sample);
    }
    return out;
}

namespace {

json sample_to_json(const PreparedSample& ps, const fs::path& root) {
    const auto& s = ps.sample;
    json j{{"id", s.patient_id},
           {"age", s.age},
           {"sex", s.sex},
           {"left", fs::relative(s.left_path, root).generic_string()},
           {"right", fs::relative(s.right_path, root).generic_string()},
           {"labels", s.labels.key()},
           {"provenance", to_string(s.provenance)},
           {"source_ids", s.source_ids},
           {"partition", to_string(ps.partition)}};
    if (ps.box) j["box"] = {ps.box->x0, ps.box->y0, ps.box->x1, ps.box->y1};
    return j;
}

LabelVector labels_from_key(const std::string& key) {
    if (key.size() != kNumClasses) throw FormatError("manifest: malformed label key '" + key + "'");
    LabelVector v;
    for (std::size_t i = 0; i < key.size(); ++i) {
        if (key[i] != '0' && key[i] != '1') throw FormatError("manifest: malformed label key '" + key + "'");
        v.bits[i] = key[i] == '1';
    }
    return v;
}

double class_multiplier(const DataConfig& cfg, const LabelVector& labels) {
    if (labels.count() == 1) {
        auto it = cfg.class_multipliers.find(std::string(kClassNames[static_cast<std::size_t>(labels.single_class())]));
        if (it != cfg.class_multipliers.end()) return it->second;
    }
    return cfg.multiplier;
}

}  // namespace

PrepareResult prepare_dataset(const RunConfig& config, const fs::path& out_dir) {
    config.validate();
    const auto& data = config.data;
    if (data.csv.empty()) throw PathError("data.csv is not set");
    const fs::path csv = data.csv;
    if (!fs::is_regular_file(csv)) throw PathError("ODIR index not found: " + csv.string());
    const fs::path image_dir = data.image_dir.empty() ? csv.parent_path() : fs::path(data.image_dir);
    if (!fs::is_directory(image_dir)) throw PathError("image directory not found: " + image_dir.string());

    auto index = load_odir_index(csv, image_dir);
    const int resolution = config.model.input_resolution;
    const TaskMode mode = config.model.task_mode;

    PrepareResult result;
    auto& ds = result.dataset;
    ds.root = fs::absolute(out_dir);
    ds.skip_report = index.report;
    const fs::path left_dir = ds.root / "images" / "left";
    const fs::path right_dir = ds.root / "images" / "right";
    fs::create_directories(left_dir);
    fs::create_directories(right_dir);

    auto preprocess = [&](const fs::path& path) {
        cv::Mat img = resize_center_crop(read_rgb(path), resolution);
        return data.illumination_correction ? illumination_correct(img) : img;
    };

    std::vector<PairedSample> originals;
    std::map<std::string, PairedImages> images;
    for (auto s : index.samples) {
        const bool admissible = mode == TaskMode::multiclass ? s.labels.count() == 1 : s.labels.count() >= 1;
        if (!admissible) {
            ++ds.skip_report.skipped;
            ds.skip_report.skipped_rows.push_back({s.patient_id, "label_mode"});
            continue;
        }
        PairedImages pair{preprocess(s.left_path), preprocess(s.right_path)};
        s.left_path = left_dir / (s.patient_id + ".png");
        s.right_path = right_dir / (s.patient_id + ".png");
        write_rgb(s.left_path, pair.left);
        write_rgb(s.right_path, pair.right);
        images.emplace(s.patient_id, std::move(pair));
        originals.push_back(std::move(s));
    }
    if (originals.empty()) throw EmptyDatasetError("no usable samples in " + csv.string());

    auto split = stratified_split(originals, data.split, config.seed);
    for (const auto& s : originals) ds.samples.push_back({s, split.assignment.at(s.patient_id), std::nullopt});

    // CutMix within each (partition, label) group; donors never leave the group.
    std::set<Partition> augment;
    for (const auto& p : data.augment_partitions) augment.insert(partition_from_string(p));
    std::uint64_t aug_index = 0;
    for (Partition part : {Partition::train, Partition::val, Partition::test}) {
        if (!augment.count(part)) continue;
        std::map<std::string, std::vector<const PairedSample*>> groups;
        for (const auto& s : originals) {
            if (split.assignment.at(s.patient_id) == part) groups[s.labels.key()].push_back(&s);
        }
        for (const auto& [key, group] : groups) {
            const auto n = group.size();
            const double m = class_multiplier(data, group.front()->labels);
            const auto extra = static_cast<std::size_t>(std::llround((m - 1.0) * static_cast<double>(n)));
            std::map<std::pair<std::string, std::string>, int> serials;
            for (std::size_t j = 0; j < extra; ++j) {
                SampleRng rng(config.seed, kAugmentStream, aug_index++);
                const PairedSample& base = *group[j % n];
                const PairedSample* donor = &base;
                if (n > 1) {
                    auto pick = rng.below(n - 1);
                    if (pick >= j % n) ++pick;
                    donor = group[pick];
                }
                const int serial = serials[{base.patient_id, donor->patient_id}]++;
                auto mixed = paired_cutmix(base, images.at(base.patient_id), *donor, images.at(donor->patient_id), rng, serial);
                mixed.sample.left_path = left_dir / (mixed.sample.patient_id + ".png");
                mixed.sample.right_path = right_dir / (mixed.sample.patient_id + ".png");
                write_rgb(mixed.sample.left_path, mixed.images.left);
                write_rgb(mixed.sample.right_path, mixed.images.right);
                split.assignment[mixed.sample.patient_id] = part;
                ds.samples.push_back({mixed.sample, part, mixed.box});
            }
        }
    }

    std::vector<PairedSample> all;
    for (const auto& ps : ds.samples) all.push_back(ps.sample);
    check_no_leakage(split, all);

    json counts = json::object();
    for (Partition part : {Partition::train, Partition::val, Partition::test}) {
        std::size_t orig = 0, aug = 0;
        for (const auto& ps : ds.samples) {
            if (ps.partition != part) continue;
            (ps.sample.provenance == Provenance::original ? orig : aug)++;
        }
        counts[to_string(part)] = {{"original", orig}, {"augmented", aug}};
    }
    json skipped = json::array();
    for (const auto& s : ds.skip_report.skipped_rows) skipped.push_back({{"id", s.patient_id}, {"reason", s.reason}});
    json samples = json::array();
    for (const auto& ps : ds.samples) samples.push_back(sample_to_json(ps, ds.root));

    ds.config = {{"input_resolution", resolution}, {"task_mode", to_string(mode)}, {"data", to_json(data)}};
    json manifest{{"format", kManifestFormat},
                  {"seed", config.seed},
                  {"ratios", data.split},
                  {"config", ds.config},
                  {"samples", samples},
                  {"counts", counts},
                  {"skip_report", {{"rows", ds.skip_report.rows}, {"skipped", ds.skip_report.skipped}, {"entries", skipped}}},
                  {"warnings", split.warnings}};

    result.manifest_path = ds.root / "manifest.json";
    std::ofstream out(result.manifest_path, std::ios::binary | std::ios::trunc);
    if (!out) throw PathError("cannot write manifest: " + result.manifest_path.string());
    out << manifest.dump(2) << '\n';
    return result;
}

PreparedDataset load_prepared_dataset(const fs::path& dir) {
    const fs::path path = dir / "manifest.json";
    std::ifstream in(path, std::ios::binary);
    if (!in) throw PathError("prepared dataset manifest not found: " + path.string());
    json manifest;
    try {
        in >> manifest;
    } catch (const json::exception& e) {
        throw FormatError("cannot parse " + path.string() + ": " + e.what());
    }
    if (manifest.value("format", "") != kManifestFormat) throw FormatError(path.string() + " is not a dmsnet manifest");

    PreparedDataset ds;
    ds.root = fs::absolute(dir);
    try {
        ds.config = manifest.at("config");
        for (const auto& j : manifest.at("samples")) {
            PreparedSample ps;
            auto& s = ps.sample;
            s.patient_id = j.at("id").get<std::string>();
            s.age = j.at("age").get<int>();
            s.sex = j.at("sex").get<std::string>();
            s.left_path = ds.root / j.at("left").get<std::string>();
            s.right_path = ds.root / j.at("right").get<std::string>();
            s.labels = labels_from_key(j.at("labels").get<std::string>());
            s.provenance = j.at("provenance").get<std::string>() == "augmented" ? Provenance::augmented : Provenance::original;
            s.source_ids = j.at("source_ids").get<std::vector<std::string>>();
            ps.partition = partition_from_string(j.at("partition").get<std::string>());
            if (j.contains("box")) {
                const auto b = j.at("box").get<std::array<int, 4>>();
                ps.box = CutBox{b[0], b[1], b[2], b[3]};
            }
            ds.samples.push_back(std::move(ps));
        }
        const auto& skip = manifest.at("skip_report");
        ds.skip_report.rows = skip.at("rows").get<std::size_t>();
        ds.skip_report.skipped = skip.at("skipped").get<std::size_t>();
        for (const auto& e : skip.at("entries")) {
            ds.skip_report.skipped_rows.push_back({e.at("id").get<std::string>(), e.at("reason").get<std::string>()});
        }
    } catch (const json::exception& e) {
        throw FormatError("malformed manifest " + path.string() + ": " + e.what());
    }
    return ds;
}

}  // namespace dmsnet
