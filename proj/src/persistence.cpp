#include "pdvmrnn/persistence.hpp"

#include <cstring>
#include <fstream>
#include <iterator>

#include "pdvmrnn/json.hpp"

namespace pdvmrnn {

namespace {

constexpr char kDatasetMagic[8] = {'P', 'D', 'V', 'D', 'A', 'T', 'A', '\0'};
constexpr char kCheckpointMagic[8] = {'P', 'D', 'V', 'C', 'K', 'P', 'T', '\0'};
constexpr long long kFormatVersion = 1;

void put_u64(std::string& out, uint64_t v) {
    for (int k = 0; k < 8; ++k) out += char((v >> (8 * k)) & 0xff);
}

uint64_t get_u64(const std::string& bytes, size_t off) {
    uint64_t v = 0;
    for (int k = 7; k >= 0; --k) v = (v << 8) | uint8_t(bytes[off + size_t(k)]);
    return v;
}

void put_f32(std::string& out, float f) {
    uint32_t u = 0;
    std::memcpy(&u, &f, 4);
    for (int k = 0; k < 4; ++k) out += char((u >> (8 * k)) & 0xff);
}

float get_f32(const std::string& bytes, size_t off) {
    uint32_t u = 0;
    for (int k = 3; k >= 0; --k) u = (u << 8) | uint8_t(bytes[off + size_t(k)]);
    float f = 0;
    std::memcpy(&f, &u, 4);
    return f;
}

void write_container(const std::string& path, const char magic[8], const Json& header,
                     const std::string& blob) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot open '" + path + "' for writing");
    const std::string h = header.dump();
    std::string head(magic, 8);
    put_u64(head, h.size());
    f.write(head.data(), std::streamsize(head.size()));
    f.write(h.data(), std::streamsize(h.size()));
    f.write(blob.data(), std::streamsize(blob.size()));
    f.flush();
    if (!f) throw IoError("write failed for '" + path + "'");
}

struct Container {
    Json header;
    std::string blob;
};

Container read_container(const std::string& path, const char magic[8], const char* what) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError(std::string(what) + " '" + path + "': cannot open");
    std::string bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    if (bytes.size() < 16) {
        throw ValidationError(std::string(what) + " '" + path + "': file truncated");
    }
    if (std::memcmp(bytes.data(), magic, 8) != 0) {
        throw ValidationError(std::string(what) + " '" + path + "': bad magic");
    }
    const uint64_t hlen = get_u64(bytes, 8);
    if (16 + hlen > bytes.size()) {
        throw ValidationError(std::string(what) + " '" + path + "': header truncated");
    }
    Container c;
    c.header = Json::parse(bytes.substr(16, size_t(hlen)));
    c.blob = bytes.substr(16 + size_t(hlen));
    return c;
}

void check_version_kind(const Json& h, const char* kind, const char* what) {
    const long long v = h.at("version").as_int();
    if (v != kFormatVersion) {
        throw ValidationError(std::string(what) + " version " + std::to_string(v) +
                              " unsupported (expected " + std::to_string(kFormatVersion) + ")");
    }
    if (h.at("kind").as_str() != kind) {
        throw ValidationError(std::string(what) + ": wrong kind '" + h.at("kind").as_str() + "'");
    }
}

Json pair_json(const std::array<double, 2>& p) {
    Json j = Json::array();
    j.push(Json::number(p[0]));
    j.push(Json::number(p[1]));
    return j;
}

std::array<double, 2> pair_from(const Json& j) {
    if (j.as_arr().size() != 2) throw ValidationError("json: expected a pair");
    return {j.arr[0].as_double(), j.arr[1].as_double()};
}

// Every saved tensor in its fixed file order. Shared by save and load so the
// index never drifts between the two.
template <typename Fn>
void each_named_tensor(TrainStateT<float>& st, Fn&& fn) {
    st.model.for_each_param([&](const std::string& name, Tensor& t) { fn("model." + name, t); });
    size_t wi = 0;
    st.model.for_each_param([&](const std::string& name, Tensor&) {
        fn("adam." + name + ".m", st.w_slots[wi].m);
        fn("adam." + name + ".v", st.w_slots[wi].v);
        ++wi;
    });
    for (size_t s = 0; s < st.is_table.size(); ++s) {
        const std::string tag = "is" + std::to_string(s) + ".";
        st.is_table[s].for_each([&](const std::string& name, Tensor& t) { fn(tag + name, t); });
        size_t k = 0;
        const std::string atag = "isadam" + std::to_string(s) + ".";
        st.is_table[s].for_each([&](const std::string& name, Tensor&) {
            fn(atag + name + ".m", st.is_slots[s][k].m);
            fn(atag + name + ".v", st.is_slots[s][k].v);
            ++k;
        });
    }
}

Json config_json(const ModelConfig& c) {
    Json j = Json::object();
    j["frame_size"] = Json::integer(c.frame_size);
    Json vc = Json::array();
    for (int x : c.vision_channels) vc.push(Json::integer(x));
    j["vision_channels"] = std::move(vc);
    j["shared_hw"] = Json::integer(c.shared_hw);
    j["shared_channels"] = Json::integer(c.shared_channels);
    Json mw = Json::array();
    for (int x : c.motor_widths) mw.push(Json::integer(x));
    j["motor_widths"] = std::move(mw);
    j["joints"] = Json::integer(c.joints);
    j["block"] = Json::integer(c.block);
    return j;
}

ModelConfig config_from(const Json& j) {
    ModelConfig c;
    c.frame_size = int(j.at("frame_size").as_int());
    c.vision_channels.clear();
    for (const auto& x : j.at("vision_channels").as_arr()) c.vision_channels.push_back(int(x.as_int()));
    c.shared_hw = int(j.at("shared_hw").as_int());
    c.shared_channels = int(j.at("shared_channels").as_int());
    c.motor_widths.clear();
    for (const auto& x : j.at("motor_widths").as_arr()) c.motor_widths.push_back(int(x.as_int()));
    c.joints = int(j.at("joints").as_int());
    c.block = int(j.at("block").as_int());
    c.validate();
    return c;
}

} // namespace

void save_dataset(const std::string& path, const Dataset& ds) {
    ds.validate();
    Json h = Json::object();
    h["version"] = Json::integer(kFormatVersion);
    h["kind"] = Json::str("dataset");
    h["task"] = Json::str(ds.task);
    h["frame_size"] = Json::integer(ds.frame_size);
    h["joints"] = Json::integer(ds.joints);
    h["block"] = Json::integer(ds.block);
    h["sample_rate_hz"] = Json::number(ds.sample_rate_hz);
    h["base_seed"] = Json::uinteger(ds.base_seed);
    h["first_index"] = Json::uinteger(ds.first_index);
    Json ranges = Json::array();
    for (const auto& r : ds.joint_ranges) ranges.push(pair_json(r));
    h["joint_ranges"] = std::move(ranges);

    std::string blob;
    Json index = Json::array();
    for (const auto& seq : ds.sequences) {
        Json row = Json::object();
        const int T = seq.steps();
        row["steps"] = Json::integer(T);
        row["frames_offset"] = Json::uinteger(blob.size());
        const size_t fbytes = size_t(T) * size_t(ds.frame_size) * size_t(ds.frame_size);
        row["frames_size"] = Json::uinteger(fbytes);
        for (const auto& frame : seq.frames) {
            blob.append(reinterpret_cast<const char*>(frame.data()), frame.size());
        }
        row["joints_offset"] = Json::uinteger(blob.size());
        row["joints_size"] = Json::uinteger(size_t(T) * size_t(ds.joints) * 4);
        for (const auto& jv : seq.joint_angles) {
            for (float a : jv) put_f32(blob, a);
        }
        index.push(std::move(row));
    }
    h["sequences"] = std::move(index);

    Json scenes = Json::array();
    for (const auto& sc : ds.scenes) {
        Json row = Json::object();
        row["task"] = Json::str(sc.task);
        row["goal"] = pair_json(sc.goal);
        row["marker"] = sc.marker ? pair_json(*sc.marker) : Json::null();
        row["object"] = sc.object ? pair_json(*sc.object) : Json::null();
        scenes.push(std::move(row));
    }
    h["scenes"] = std::move(scenes);

    write_container(path, kDatasetMagic, h, blob);
}

Dataset load_dataset(const std::string& path) {
    const Container c = read_container(path, kDatasetMagic, "dataset");
    const Json& h = c.header;
    check_version_kind(h, "dataset", "dataset");

    Dataset ds;
    ds.task = h.at("task").as_str();
    ds.frame_size = int(h.at("frame_size").as_int());
    ds.joints = int(h.at("joints").as_int());
    ds.block = int(h.at("block").as_int());
    ds.sample_rate_hz = h.at("sample_rate_hz").as_double();
    ds.base_seed = h.at("base_seed").as_uint();
    ds.first_index = h.at("first_index").as_uint();
    for (const auto& r : h.at("joint_ranges").as_arr()) ds.joint_ranges.push_back(pair_from(r));

    const auto& index = h.at("sequences").as_arr();
    const auto& scenes = h.at("scenes").as_arr();
    if (index.size() != scenes.size()) {
        throw ValidationError("dataset '" + path + "': " + std::to_string(index.size()) +
                              " sequences vs " + std::to_string(scenes.size()) + " scenes");
    }
    size_t cursor = 0;
    const size_t px = size_t(ds.frame_size) * size_t(ds.frame_size);
    for (size_t s = 0; s < index.size(); ++s) {
        const Json& row = index[s];
        const int T = int(row.at("steps").as_int());
        if (T <= 0) throw ValidationError("dataset '" + path + "': nonpositive sequence length");
        const uint64_t fo = row.at("frames_offset").as_uint();
        const uint64_t fs = row.at("frames_size").as_uint();
        const uint64_t jo = row.at("joints_offset").as_uint();
        const uint64_t js = row.at("joints_size").as_uint();
        if (fo != cursor || fs != size_t(T) * px) {
            throw ValidationError("dataset '" + path + "': frame index does not tile the blob at sequence " +
                                  std::to_string(s));
        }
        cursor += size_t(fs);
        if (jo != cursor || js != size_t(T) * size_t(ds.joints) * 4) {
            throw ValidationError("dataset '" + path + "': joint index does not tile the blob at sequence " +
                                  std::to_string(s));
        }
        cursor += size_t(js);
        if (cursor > c.blob.size()) {
            throw ValidationError("dataset '" + path + "': blob truncated at sequence " + std::to_string(s));
        }

        VisuomotorSequence seq;
        seq.frame_size = ds.frame_size;
        seq.joints = ds.joints;
        for (int t = 0; t < T; ++t) {
            const size_t base = size_t(fo) + size_t(t) * px;
            seq.frames.emplace_back(c.blob.begin() + long(base), c.blob.begin() + long(base + px));
        }
        for (int t = 0; t < T; ++t) {
            std::vector<float> jv(size_t(ds.joints), 0.0f);
            for (int j = 0; j < ds.joints; ++j) {
                jv[size_t(j)] = get_f32(c.blob, size_t(jo) + (size_t(t) * size_t(ds.joints) + size_t(j)) * 4);
            }
            seq.joint_angles.push_back(std::move(jv));
        }
        ds.sequences.push_back(std::move(seq));

        const Json& sc = scenes[s];
        SceneInfo info;
        info.task = sc.at("task").as_str();
        info.goal = pair_from(sc.at("goal"));
        if (!sc.at("marker").is_null()) info.marker = pair_from(sc.at("marker"));
        if (!sc.at("object").is_null()) info.object = pair_from(sc.at("object"));
        ds.scenes.push_back(info);
    }
    if (cursor != c.blob.size()) {
        throw ValidationError("dataset '" + path + "': blob has " + std::to_string(c.blob.size()) +
                              " bytes, index covers " + std::to_string(cursor));
    }
    ds.validate();
    return ds;
}

void save_checkpoint(const std::string& path, const CheckpointData& ck) {
    // each_named_tensor only reads here, but the visitor API is non-const
    auto& st = const_cast<TrainStateT<float>&>(ck.state);
    Json h = Json::object();
    h["version"] = Json::integer(kFormatVersion);
    h["kind"] = Json::str("checkpoint");
    h["config"] = config_json(st.model.cfg);
    h["task"] = Json::str(ck.task);
    h["seed"] = Json::uinteger(ck.seed);
    h["t_max_hint"] = Json::integer(ck.t_max_hint);
    h["data_seed"] = Json::uinteger(ck.data_seed);
    h["data_first"] = Json::uinteger(ck.data_first);
    h["data_count"] = Json::uinteger(ck.data_count);
    h["epochs_done"] = Json::integer(st.epochs_done);
    h["w_step"] = Json::integer(st.w_step);
    Json steps = Json::array();
    for (long v : st.is_steps) steps.push(Json::integer(v));
    h["is_steps"] = std::move(steps);
    Json ranges = Json::array();
    for (const auto& r : ck.joint_ranges) ranges.push(pair_json(r));
    h["joint_ranges"] = std::move(ranges);

    Json tensors = Json::array();
    std::string blob;
    each_named_tensor(st, [&](const std::string& name, Tensor& t) {
        Json row = Json::object();
        row["name"] = Json::str(name);
        Json shape = Json::array();
        for (int d : t.shape) shape.push(Json::integer(d));
        row["shape"] = std::move(shape);
        tensors.push(std::move(row));
        for (float v : t.data) put_f32(blob, v);
    });
    h["tensors"] = std::move(tensors);

    write_container(path, kCheckpointMagic, h, blob);
}

CheckpointData load_checkpoint(const std::string& path) {
    const Container c = read_container(path, kCheckpointMagic, "checkpoint");
    const Json& h = c.header;
    check_version_kind(h, "checkpoint", "checkpoint");

    const ModelConfig cfg = config_from(h.at("config"));
    const auto& steps = h.at("is_steps").as_arr();

    CheckpointData ck;
    ck.state = make_train_state<float>(cfg, steps.size(), 0);
    ck.task = h.at("task").as_str();
    ck.seed = h.at("seed").as_uint();
    ck.t_max_hint = int(h.at("t_max_hint").as_int());
    ck.data_seed = h.at("data_seed").as_uint();
    ck.data_first = h.at("data_first").as_uint();
    ck.data_count = h.at("data_count").as_uint();
    for (const auto& r : h.at("joint_ranges").as_arr()) ck.joint_ranges.push_back(pair_from(r));
    ck.state.epochs_done = int(h.at("epochs_done").as_int());
    ck.state.w_step = h.at("w_step").as_int();
    for (size_t s = 0; s < steps.size(); ++s) ck.state.is_steps[s] = steps[s].as_int();

    const auto& tensors = h.at("tensors").as_arr();
    size_t ti = 0;
    size_t offset = 0;
    each_named_tensor(ck.state, [&](const std::string& name, Tensor& t) {
        if (ti >= tensors.size()) {
            throw ValidationError("checkpoint '" + path + "': tensor index ends before '" + name + "'");
        }
        const Json& row = tensors[ti];
        if (row.at("name").as_str() != name) {
            throw ValidationError("checkpoint '" + path + "': tensor " + std::to_string(ti) +
                                  " is '" + row.at("name").as_str() + "', expected '" + name + "'");
        }
        const auto& shape = row.at("shape").as_arr();
        bool ok = shape.size() == t.shape.size();
        for (size_t k = 0; ok && k < shape.size(); ++k) ok = shape[k].as_int() == t.shape[k];
        if (!ok) {
            throw ValidationError("checkpoint '" + path + "': tensor '" + name + "' shape mismatch");
        }
        if (offset + t.numel() * 4 > c.blob.size()) {
            throw ValidationError("checkpoint '" + path + "': payload truncated at '" + name + "'");
        }
        for (size_t k = 0; k < t.numel(); ++k) t.data[k] = get_f32(c.blob, offset + k * 4);
        offset += t.numel() * 4;
        ++ti;
    });
    if (ti != tensors.size()) {
        throw ValidationError("checkpoint '" + path + "': tensor index lists " +
                              std::to_string(tensors.size()) + " tensors, file layout has " +
                              std::to_string(ti));
    }
    if (offset != c.blob.size()) {
        throw ValidationError("checkpoint '" + path + "': payload has " + std::to_string(c.blob.size()) +
                              " bytes, tensors cover " + std::to_string(offset));
    }
    return ck;
}

} // namespace pdvmrnn
