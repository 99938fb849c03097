#include "vtm/nn/weights_io.hpp"

#include "vtm/errors.hpp"

#include <bit>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

namespace vtm::nn {

namespace {

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

void append_le(std::string& out, double v) {
    auto bits = std::bit_cast<std::uint64_t>(v);
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xFFu));
}

double read_le(const char* p) {
    std::uint64_t bits = 0;
    for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(static_cast<unsigned char>(p[i])) << (8 * i);
    return std::bit_cast<double>(bits);
}

[[noreturn]] void bad(const std::string& what) { throw InputError("malformed weight file: " + what); }

}  // namespace

std::string serialize_weights(const Network& net) {
    std::ostringstream h;
    const auto& in = net.input_shape();
    h << "vtm-weights 1\n";
    h << "input " << in.c << ' ' << in.h << ' ' << in.w << '\n';
    h << "seed " << net.seed() << '\n';
    h << "layers " << net.layers().size() << '\n';
    for (std::size_t i = 0; i < net.layers().size(); ++i) {
        const LayerSpec& s = net.layers()[i];
        h << "layer " << i << ' ' << to_string(s.kind);
        switch (s.kind) {
            case LayerKind::conv:
                h << ' ' << s.in_channels << ' ' << s.out_channels << ' ' << s.kernel << ' ' << s.stride << ' '
                  << s.padding;
                break;
            case LayerKind::leaky: h << ' ' << fmt(s.slope); break;
            case LayerKind::shortcut_add: h << ' ' << s.source; break;
            case LayerKind::upsample_nearest: h << ' ' << s.scale; break;
            case LayerKind::sigmoid_head: break;
        }
        h << '\n';
    }
    for (const auto& [key, value] : net.meta()) {
        if (key.find_first_of(" \n") != std::string::npos || value.find('\n') != std::string::npos) {
            throw ConfigError("metadata key/value must be single-line and key space-free: " + key);
        }
        h << "meta " << key << ' ' << value << '\n';
    }
    std::string payload;
    for (std::size_t i = 0; i < net.layers().size(); ++i) {
        auto slot = net.param_index(i);
        if (!slot) continue;
        const ConvParams& p = net.params()[*slot];
        const Shape4 ws = p.weight.shape();
        h << "tensor " << i << " weight " << ws.n << ' ' << ws.c << ' ' << ws.h << ' ' << ws.w << '\n';
        h << "tensor " << i << " bias " << p.bias.size() << '\n';
        for (double v : p.weight.values()) append_le(payload, v);
        for (double v : p.bias) append_le(payload, v);
    }
    h << "payload " << payload.size() << '\n';
    h << "end\n";
    return h.str() + payload;
}

void write_weights(const Network& net, const std::filesystem::path& path) {
    const std::string bytes = serialize_weights(net);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open for writing: " + path.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("write failed: " + path.string());
}

Network parse_weights(const std::string& bytes) {
    const std::string terminator = "\nend\n";
    const auto end_pos = bytes.find(terminator);
    if (end_pos == std::string::npos) bad("missing 'end' line");
    std::istringstream h(bytes.substr(0, end_pos + 1));
    const std::size_t payload_start = end_pos + terminator.size();

    std::string line;
    if (!std::getline(h, line) || line != "vtm-weights 1") bad("unknown magic/version");
    InputShape input;
    std::uint64_t seed = 0;
    std::size_t layer_count = 0;
    std::vector<LayerSpec> layers;
    std::map<std::string, std::string> meta;
    std::size_t payload_size = 0;
    bool have_payload = false;
    while (std::getline(h, line)) {
        std::istringstream ls(line);
        std::string key;
        ls >> key;
        if (key == "input") {
            ls >> input.c >> input.h >> input.w;
        } else if (key == "seed") {
            ls >> seed;
        } else if (key == "layers") {
            ls >> layer_count;
        } else if (key == "layer") {
            std::size_t idx = 0;
            std::string kind;
            ls >> idx >> kind;
            if (idx != layers.size()) bad("layer indices out of order");
            LayerSpec s;
            if (kind == "conv") {
                s.kind = LayerKind::conv;
                ls >> s.in_channels >> s.out_channels >> s.kernel >> s.stride >> s.padding;
            } else if (kind == "leaky") {
                s.kind = LayerKind::leaky;
                ls >> s.slope;
            } else if (kind == "shortcut") {
                s.kind = LayerKind::shortcut_add;
                ls >> s.source;
            } else if (kind == "upsample") {
                s.kind = LayerKind::upsample_nearest;
                ls >> s.scale;
            } else if (kind == "sigmoid") {
                s.kind = LayerKind::sigmoid_head;
            } else {
                bad("unknown layer kind '" + kind + "'");
            }
            layers.push_back(s);
        } else if (key == "meta") {
            std::string k;
            ls >> k;
            std::string value;
            std::getline(ls, value);
            if (!value.empty() && value.front() == ' ') value.erase(0, 1);
            meta[k] = value;
        } else if (key == "tensor") {
            // Shapes are implied by the layer chain; they are checked after construction.
            continue;
        } else if (key == "payload") {
            ls >> payload_size;
            have_payload = true;
        } else {
            bad("unknown header key '" + key + "'");
        }
        if (ls.fail()) bad("could not parse line '" + line + "'");
    }
    if (layers.size() != layer_count) bad("layer count mismatch");
    if (!have_payload) bad("missing payload size");
    if (bytes.size() - payload_start != payload_size) bad("payload size mismatch");

    Network net(input, std::move(layers), seed);
    if (net.parameter_count() * 8 != payload_size) bad("payload does not match layer shapes");
    const char* p = bytes.data() + payload_start;
    for (auto& cp : net.params()) {
        for (double& v : cp.weight.values()) {
            v = read_le(p);
            p += 8;
        }
        for (double& v : cp.bias) {
            v = read_le(p);
            p += 8;
        }
    }
    net.meta() = std::move(meta);
    return net;
}

Network read_weights(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open for reading: " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_weights(ss.str());
}

}  // namespace vtm::nn
