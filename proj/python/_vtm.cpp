#include "vtm/blob/blob.hpp"
#include "vtm/errors.hpp"
#include "vtm/eval/match.hpp"
#include "vtm/marknet/grid.hpp"
#include "vtm/marknet/model.hpp"
#include "vtm/nn/weights_io.hpp"
#include "vtm/postproc/postproc.hpp"
#include "vtm/synth/dataset.hpp"
#include "vtm/synth/scene.hpp"

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <optional>
#include <string>
#include <tuple>
#include <vector>

namespace py = pybind11;
using namespace vtm;

namespace {

using MarkerTuple = std::tuple<double, double, double>;

MarkerSet to_markers(const std::vector<MarkerTuple>& in) {
    MarkerSet out;
    out.reserve(in.size());
    for (const auto& [x, y, c] : in) out.push_back({x, y, c});
    return out;
}

std::vector<MarkerTuple> from_markers(const MarkerSet& in) {
    std::vector<MarkerTuple> out;
    out.reserve(in.size());
    for (const auto& m : in) out.emplace_back(m.x, m.y, m.c);
    return out;
}

Image to_image(const py::array_t<double, py::array::c_style | py::array::forcecast>& a) {
    if (a.ndim() != 2) throw InputError("image must be a 2-D array");
    Image img(static_cast<int>(a.shape(1)), static_cast<int>(a.shape(0)));
    auto r = a.unchecked<2>();
    for (py::ssize_t row = 0; row < a.shape(0); ++row)
        for (py::ssize_t col = 0; col < a.shape(1); ++col) img.at(static_cast<int>(col), static_cast<int>(row)) = r(row, col);
    return img;
}

py::array_t<double> from_image(const Image& img) {
    py::array_t<double> a({img.height(), img.width()});
    auto w = a.mutable_unchecked<2>();
    for (int row = 0; row < img.height(); ++row)
        for (int col = 0; col < img.width(); ++col) w(row, col) = img.at(col, row);
    return a;
}

class Detector {
public:
    explicit Detector(const std::filesystem::path& weights, const std::optional<std::filesystem::path>& mre)
        : net_(nn::read_weights(weights)), cfg_(marknet::load_config(net_)) {
        post_ = postproc::PostprocConfig::defaults_for(cfg_);
        if (mre) mre_.emplace(nn::read_weights(*mre));
        post_.use_mre = mre_.has_value();
    }

    std::vector<std::tuple<double, double, double, std::string>> localize(
        const py::array_t<double, py::array::c_style | py::array::forcecast>& image) const {
        const Image img = to_image(image);
        std::vector<std::tuple<double, double, double, std::string>> out;
        for (const auto& m : postproc::localize(img, net_, mre_ ? &*mre_ : nullptr, cfg_, post_))
            out.emplace_back(m.marker.x, m.marker.y, m.marker.c, std::string(to_string(m.source)));
        return out;
    }

    std::vector<MarkerTuple> candidates(const py::array_t<double, py::array::c_style | py::array::forcecast>& image) const {
        return from_markers(postproc::candidates(net_, to_image(image), cfg_, post_));
    }

    int image_size() const { return cfg_.image_size; }
    int grid_size() const { return cfg_.grid_size; }
    int candidates_per_cell() const { return cfg_.candidates; }
    bool uses_mre() const { return mre_.has_value(); }

private:
    nn::Network net_;
    marknet::MarknetConfig cfg_;
    postproc::PostprocConfig post_;
    std::optional<postproc::MreModel> mre_;
};

}  // namespace

PYBIND11_MODULE(_vtm, m) {
    m.doc() = "Marker localization core";
    m.attr("__version__") = VTM_VERSION;

    py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
    py::register_exception<InputError>(m, "InputError", PyExc_ValueError);
    py::register_exception<NumericError>(m, "NumericError", PyExc_ArithmeticError);
    py::register_exception<StateError>(m, "StateError", PyExc_RuntimeError);
    py::register_exception<IoError>(m, "IoError", PyExc_OSError);

    m.def(
        "generate_scene",
        [](std::uint64_t seed) {
            const auto s = synth::generate_scene(seed, synth::SceneSpec::desk_default());
            std::vector<std::string> tags;
            for (auto t : s.tags) tags.emplace_back(to_string(t));
            return py::make_tuple(from_image(s.image), from_markers(s.truth), tags);
        },
        py::arg("seed"), "Render the default 13 x 13 lattice scene; returns (image, truth, tags).");

    m.def(
        "decode",
        [](const std::vector<double>& raw, int image_size, int grid_size, int candidates) {
            marknet::MarknetConfig cfg;
            cfg.image_size = image_size;
            cfg.grid_size = grid_size;
            cfg.candidates = candidates;
            cfg.validate();
            marknet::GridPrediction g(grid_size, candidates);
            if (raw.size() != g.raw().size()) throw ConfigError("raw grid must hold S*S*m*3 logits");
            g.raw() = raw;
            return from_markers(marknet::decode(g, cfg));
        },
        py::arg("raw"), py::arg("image_size"), py::arg("grid_size"), py::arg("candidates"),
        "Decode flat S*S*m*3 logits (row, col, candidate, x/y/c) into (x, y, c) points.");

    m.def(
        "match",
        [](const std::vector<MarkerTuple>& pred, const std::vector<MarkerTuple>& truth, double tau) {
            const auto r = eval::match_predictions(to_markers(pred), to_markers(truth), tau);
            const auto c = eval::counts_of(r);
            py::dict d;
            d["pt"] = c.pt;
            d["pf"] = c.pf;
            d["t"] = c.t;
            d["d"] = c.d;
            d["pred_to_truth"] = r.pred_to_truth;
            return d;
        },
        py::arg("pred"), py::arg("truth"), py::arg("tau"));

    m.def(
        "metrics",
        [](std::size_t pt, std::size_t pf, std::size_t t, double d) {
            const auto r = eval::metrics(eval::Counts{pt, pf, t, d});
            py::dict out;
            out["precision"] = r.precision ? py::cast(*r.precision) : py::none();
            out["recall"] = r.recall ? py::cast(*r.recall) : py::none();
            out["loss"] = r.loss ? py::cast(*r.loss) : py::none();
            return out;
        },
        py::arg("pt"), py::arg("pf"), py::arg("t"), py::arg("d") = 0.0);

    m.def(
        "build_feature",
        [](std::size_t target, const std::vector<MarkerTuple>& all, double sentinel) {
            const auto f = postproc::build_feature(target, to_markers(all), sentinel);
            return std::vector<double>(f.begin(), f.end());
        },
        py::arg("target"), py::arg("markers"), py::arg("sentinel"));

    m.def(
        "dedup", [](const std::vector<MarkerTuple>& in, double radius) { return from_markers(postproc::dedup(to_markers(in), radius)); },
        py::arg("markers"), py::arg("radius"));

    m.def(
        "detect_blobs",
        [](const py::array_t<double, py::array::c_style | py::array::forcecast>& image, double threshold, double min_area,
           double max_area, double min_circularity, int connectivity) {
            blob::BlobParams p;
            p.threshold = threshold;
            p.min_area = min_area;
            p.max_area = max_area;
            p.min_circularity = min_circularity;
            p.connectivity = connectivity;
            return from_markers(blob::detect_blobs(to_image(image), p));
        },
        py::arg("image"), py::arg("threshold") = 0.5, py::arg("min_area") = 4.0, py::arg("max_area") = 60.0,
        py::arg("min_circularity") = 0.5, py::arg("connectivity") = 8);

    m.def(
        "make_dataset",
        [](const std::filesystem::path& root, int n, std::uint64_t seed, std::optional<double> tau) {
            auto man = synth::make_dataset(n, {}, seed, root);
            synth::tune_and_partition(root, man, tau.value_or(2.0));
            synth::write_manifest(man, root / "manifest.json");
            py::dict d;
            d["train"] = man.train;
            d["val"] = man.val;
            d["test"] = man.test;
            d["tau"] = *man.tau;
            return d;
        },
        py::arg("root"), py::arg("n"), py::arg("seed") = 7, py::arg("tau") = py::none(),
        "Render n scenes under root, tune the blob baseline and write manifest.json.");

    m.def("read_pgm", [](const std::filesystem::path& p) { return from_image(read_pgm(p)); }, py::arg("path"));

    py::class_<Detector>(m, "Detector")
        .def(py::init<const std::filesystem::path&, const std::optional<std::filesystem::path>&>(), py::arg("weights"),
             py::arg("mre") = py::none())
        .def("localize", &Detector::localize, py::arg("image"),
             "Two-stage localization; returns (x, y, c, source) tuples.")
        .def("candidates", &Detector::candidates, py::arg("image"))
        .def_property_readonly("image_size", &Detector::image_size)
        .def_property_readonly("grid_size", &Detector::grid_size)
        .def_property_readonly("candidates_per_cell", &Detector::candidates_per_cell)
        .def_property_readonly("uses_mre", &Detector::uses_mre);
}
