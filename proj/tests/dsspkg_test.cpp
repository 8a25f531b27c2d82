#include "gridmcp/dsspkg/dss.hpp"
#include "gridmcp/dsspkg/package.hpp"
#include "gridmcp/dsspkg/topology.hpp"
#include "gridmcp/error.hpp"
#include "gridmcp/pfcore/solver.hpp"
#include "support/nodal_oracle.hpp"
#include "support/power_balance.hpp"

#include <doctest.h>

#include <fstream>
#include <mutex>
#include <random>

using namespace gridmcp;
namespace fs = std::filesystem;

namespace {

const fs::path kLibrary = GRIDMCP_TEST_LIBRARY_DIR;

ErrorCode code_of(const std::function<void()>& fn)
{
    try {
        fn();
    } catch (const Error& e) {
        return e.code();
    }
    FAIL("expected an error");
    return ErrorCode::InvalidArgument;
}

struct TempDir {
    fs::path path;
    TempDir()
    {
        std::random_device rd;
        path = fs::temp_directory_path() / ("gridmcp_dss_" + std::to_string(rd()));
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
    void write(const fs::path& rel, const std::string& text) const
    {
        fs::create_directories((path / rel).parent_path());
        std::ofstream(path / rel) << text;
    }
};

/// Records every path the loader asks to read.
class RecordingFs final : public dss::FileSystem {
public:
    fs::path canonical(const fs::path& p) const override { return inner_->canonical(p); }
    bool is_file(const fs::path& p) const override { return inner_->is_file(p); }
    bool is_directory(const fs::path& p) const override { return inner_->is_directory(p); }
    std::vector<fs::path> list_directory(const fs::path& p) const override { return inner_->list_directory(p); }
    std::string read(const fs::path& p) const override
    {
        std::lock_guard lock(mutex_);
        reads_.push_back(p);
        return inner_->read(p);
    }
    std::vector<fs::path> reads() const
    {
        std::lock_guard lock(mutex_);
        return reads_;
    }

private:
    std::shared_ptr<const dss::FileSystem> inner_ = dss::local_filesystem();
    mutable std::mutex mutex_;
    mutable std::vector<fs::path> reads_;
};

const char* kMiniFeeder = R"(
New Circuit.mini basekv=12.47 bus1=src
New LineCode.lc nphases=3 r1=0.3 x1=0.6 units=km
New Line.l1 bus1=src bus2=b1 linecode=lc length=1 units=km
New Line.l2 bus1=b1 bus2=b2 linecode=lc length=500 units=m
New Load.ld bus1=b2 kw=900 kvar=300
)";

} // namespace

TEST_CASE("single load statement")
{
    auto out = dss::parse_dss_subset("New Load.671 bus1=671 kW=1155 kvar=660");
    REQUIRE(out.directives.size() == 1);
    const auto& d = out.directives[0];
    CHECK(d.kind == dss::DirectiveKind::Load);
    CHECK(d.name == "671");
    CHECK(d.get("kw") == "1155");
    CHECK(d.get("kvar") == "660");
    CHECK(out.warnings.empty());
}

TEST_CASE("empty input gives no directives")
{
    auto out = dss::parse_dss_subset("");
    CHECK(out.directives.empty());
    CHECK(out.warnings.empty());
    CHECK(dss::parse_dss_subset("\n  ! only a comment\n\n").directives.empty());
}

TEST_CASE("unknown directives warn and the rest round-trips")
{
    const std::string text = "New Circuit.x bus1=a basekv=4.16\n"
                             "New PVSystem.pv1 bus1=a kva=10\n"
                             "New Line.l1 bus1=a bus2=b r1=0.1 x1=0.2 ! trailing comment\n"
                             "~ length=2\n"
                             "Set voltagebases=[4.16]\n"
                             "Solve\n";
    auto first = dss::parse_dss_subset(text);
    CHECK(first.warnings.size() == 1);
    CHECK(first.warnings[0].find("PVSystem") != std::string::npos);
    REQUIRE(first.directives.size() == 4);
    CHECK(first.directives[1].get("length") == "2");

    auto emitted = dss::emit_dss(first.directives);
    auto second = dss::parse_dss_subset(emitted);
    REQUIRE(second.directives.size() == first.directives.size());
    for (std::size_t i = 0; i < first.directives.size(); ++i) {
        CHECK(first.directives[i].same_content(second.directives[i]));
    }
    CHECK(dss::emit_dss(second.directives) == emitted);
}

TEST_CASE("bundled feeder round-trips through the emitter")
{
    std::ifstream in(kLibrary / "ieee13" / "linecodes.dss");
    std::string text((std::istreambuf_iterator<char>(in)), {});
    auto first = dss::parse_dss_subset(text);
    auto second = dss::parse_dss_subset(dss::emit_dss(first.directives));
    REQUIRE(first.directives.size() == 7);
    REQUIRE(second.directives.size() == 7);
    for (std::size_t i = 0; i < 7; ++i) {
        CHECK(first.directives[i].same_content(second.directives[i]));
    }
}

TEST_CASE("syntax errors carry the line number")
{
    try {
        dss::parse_dss_subset("New Circuit.x bus1=a\n\nNew Line.l bus1=a bus2=b rmatrix=(1 | 2\n", "bad.dss");
        FAIL("expected SyntaxError");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::SyntaxError);
        CHECK(std::string(e.what()).find("bad.dss:3") != std::string::npos);
    }
    CHECK(code_of([] { dss::parse_dss_subset("New Line bus1=a"); }) == ErrorCode::SyntaxError);
    CHECK(code_of([] { dss::parse_dss_subset("~ kw=1"); }) == ErrorCode::SyntaxError);
}

TEST_CASE("undefined linecode and unresolved redirect")
{
    CHECK(code_of([] { dss::parse_dss_subset("New Line.l bus1=a bus2=b linecode=nope"); }) ==
          ErrorCode::UndefinedLineCode);
    dss::RedirectResolver none = [](const std::string&) { return std::optional<std::string>{}; };
    CHECK(code_of([&] { dss::parse_dss_subset("Redirect missing.dss", "m.dss", none); }) ==
          ErrorCode::UnresolvedRedirect);
    // Without a resolver the redirect is kept and later linecode references are trusted.
    auto kept = dss::parse_dss_subset("Redirect codes.dss\nNew Line.l bus1=a bus2=b linecode=lc");
    CHECK(kept.directives.size() == 2);
    CHECK(kept.directives[0].kind == dss::DirectiveKind::Redirect);
    CHECK(code_of([&] { dss::build_circuit(kept.directives); }) == ErrorCode::UnresolvedRedirect);
}

TEST_CASE("builder converts units and applies linecodes")
{
    auto built = dss::build_circuit(dss::parse_dss_subset(kMiniFeeder).directives);
    const auto& c = built.circuit;
    REQUIRE(c.buses.size() == 3);
    const auto* l2 = c.find_line("l2");
    REQUIRE(l2 != nullptr);
    // r1 = 0.3 ohm/km over 0.5 km, x1 = 0.6 ohm/km; r0 defaults to r1 so the matrix is diagonal.
    CHECK(l2->z_ohm(pf::Phase::A, pf::Phase::A).real() == doctest::Approx(0.15));
    CHECK(l2->z_ohm(pf::Phase::B, pf::Phase::B).imag() == doctest::Approx(0.3));
    CHECK(std::abs(l2->z_ohm(pf::Phase::A, pf::Phase::B)) == doctest::Approx(0.0));
    const auto* ld = c.find_load("ld");
    REQUIRE(ld != nullptr);
    CHECK(ld->kw == 900.0);
    CHECK(ld->phases == pf::PhaseSet::abc());
}

TEST_CASE("builder rejects bad values and loops")
{
    auto build = [](const std::string& text) { dss::build_circuit(dss::parse_dss_subset(text).directives); };
    CHECK(code_of([&] { build("New Load.x bus1=a kw=1"); }) == ErrorCode::ParseError);
    CHECK(code_of([&] { build(std::string(kMiniFeeder) + "New Load.y bus1=b1 kw=abc\n"); }) == ErrorCode::ParseError);
    CHECK(code_of([&] { build(std::string(kMiniFeeder) + "New Line.l3 bus1=b2 bus2=src r1=1 x1=1\n"); }) ==
          ErrorCode::NonRadialCircuit);
    CHECK(code_of([&] {
              build(std::string(kMiniFeeder) + "New Transformer.t buses=[src b1] kvs=[12.47 12.47] kva=1000\n"
                                               "New RegControl.r transformer=t taps=[17 0 0]\n");
          }) == ErrorCode::TapOutOfRange);
}

TEST_CASE("package loader confines paths to the whitelist")
{
    dss::PathGuard guard(kLibrary);
    CHECK(code_of([&] { dss::load_circuit_package(guard, "../../etc/passwd"); }) == ErrorCode::PathEscapesWhitelist);
    CHECK(code_of([&] { dss::load_circuit_package(guard, "/etc/passwd"); }) == ErrorCode::PathEscapesWhitelist);

    TempDir outside;
    outside.write("secret/master.dss", kMiniFeeder);
    TempDir root;
    root.write("good/master.dss", std::string(kMiniFeeder) + "Redirect ../../" +
                                      outside.path.filename().string() + "/secret/master.dss\n");
    fs::create_directory_symlink(outside.path / "secret", root.path / "link");

    auto probe = std::make_shared<RecordingFs>();
    dss::PathGuard tmp_guard(root.path, probe);
    CHECK(code_of([&] { dss::load_circuit_package(tmp_guard, "link"); }) == ErrorCode::PathEscapesWhitelist);
    CHECK(code_of([&] { dss::load_circuit_package(tmp_guard, "link/master.dss"); }) ==
          ErrorCode::PathEscapesWhitelist);
    CHECK(code_of([&] { dss::load_circuit_package(tmp_guard, "good"); }) == ErrorCode::PathEscapesWhitelist);
    CHECK(dss::list_library(tmp_guard).size() == 1);
    for (const auto& p : probe->reads()) {
        CHECK(tmp_guard.contains(fs::weakly_canonical(p)));
    }
}

TEST_CASE("library listing")
{
    dss::PathGuard guard(kLibrary);
    auto entries = dss::list_library(guard);
    REQUIRE(entries.size() == 3);
    CHECK(entries[0].manifest.name == "ieee13");
    CHECK(entries[1].manifest.name == "ieee13_overvoltage");
    CHECK(entries[2].manifest.name == "ieee13_stressed");
}

TEST_CASE("bundled 13-bus package")
{
    auto probe = std::make_shared<RecordingFs>();
    dss::PathGuard guard(kLibrary, probe);
    auto pkg = dss::load_circuit_package(guard, "ieee13");
    const auto& c = pkg.built.circuit;
    CHECK(pkg.package.manifest.name == "ieee13");
    CHECK(c.buses.size() == 15);
    for (const char* bus : {"645", "652", "670", "680", "684", "rg60", "650", "611", "632", "633", "634", "646",
                            "671", "675", "692"}) {
        CHECK_MESSAGE(c.find_bus(bus) != nullptr, bus);
    }
    CHECK(c.find_bus("634")->base_kv == doctest::Approx(0.48));
    CHECK(c.find_bus("652")->base_kv == doctest::Approx(4.16));
    CHECK(c.find_bus("652")->coord.has_value());
    REQUIRE(c.regulators.size() == 1);
    CHECK(c.regulators[0].taps == std::array<int, 3>{7, 6, 8});
    CHECK(pkg.package.components.count("linecodes.dss") == 1);
    auto files = dss::package_files(pkg.package);
    CHECK(files.front().first == "master.dss");
    CHECK(files.back().first == "buscoords.csv");
    for (const auto& p : probe->reads()) {
        CHECK(guard.contains(fs::weakly_canonical(p)));
    }

    // mtx601 is in ohm per mile and the line is 2000 ft long.
    const auto* l = c.find_line("650632");
    REQUIRE(l != nullptr);
    CHECK(l->from_bus == "rg60");
    CHECK(l->z_ohm(pf::Phase::A, pf::Phase::A).real() == doctest::Approx(0.3465 * 2000.0 / 5280.0));
    // 632.3.2 puts the first matrix row on phase c.
    const auto* l645 = c.find_line("632645");
    CHECK(l645->z_ohm(pf::Phase::C, pf::Phase::C).real() == doctest::Approx(1.3238 * 500.0 / 5280.0));
    CHECK(l645->z_ohm(pf::Phase::B, pf::Phase::B).real() == doctest::Approx(1.3294 * 500.0 / 5280.0));
}

TEST_CASE("bundled packages agree with the Newton oracle")
{
    dss::PathGuard guard(kLibrary);
    for (const auto& entry : dss::list_library(guard)) {
        CAPTURE(entry.manifest.name);
        auto c = dss::load_circuit_package(guard, entry.directory).built.circuit;
        auto sweep = pf::solve_power_flow(c);
        REQUIRE(sweep.converged);
        auto oracle = testing::oracle_solve(c);
        for (const auto& [bus, pv] : sweep.bus_voltages) {
            for (auto p : pv.phases.list()) {
                CHECK(std::abs(pv[p] - oracle.bus_voltages.at(bus)[p]) <= 1e-6);
            }
        }
        CHECK(testing::power_balance_residual(c, sweep) <= 1e-6);
    }
}

TEST_CASE("topology graph")
{
    dss::PathGuard guard(kLibrary);
    auto c = dss::load_circuit_package(guard, "ieee13").built.circuit;
    auto g = dss::topology_graph(c);
    CHECK(g.nodes.size() == c.buses.size());
    CHECK(g.edges.size() == c.buses.size() - 1);
    auto kind = [&](std::string_view bus) {
        for (const auto& n : g.nodes) {
            if (n.bus == bus) {
                return n.kind;
            }
        }
        FAIL("missing node");
        return dss::ElementKind::Junction;
    };
    CHECK(kind("650") == dss::ElementKind::Source);
    CHECK(kind("rg60") == dss::ElementKind::Regulator);
    CHECK(kind("675") == dss::ElementKind::Capacitor); // also has a load
    CHECK(kind("671") == dss::ElementKind::Load);
    CHECK(kind("632") == dss::ElementKind::Junction);
    auto j = dss::to_json(g);
    CHECK(j["nodes"].size() == c.buses.size());

    auto two = dss::build_circuit(dss::parse_dss_subset("New Circuit.t bus1=a\nNew Line.l bus1=a bus2=b r1=1 x1=1\n"
                                                        "New Load.x bus1=b kw=1")
                                      .directives)
                   .circuit;
    auto g2 = dss::topology_graph(two);
    CHECK(g2.nodes.size() == 2);
    CHECK(g2.edges.size() == 1);
    CHECK(j["nodes"][0]["coord"].is_object());
    CHECK(dss::to_json(g2)["nodes"][0]["coord"].is_null());
}

TEST_CASE("buscoords parsing")
{
    auto coords = dss::parse_buscoords("bus,x,y\nA, 1.5, 2\n\nb,3,4\n");
    REQUIRE(coords.size() == 2);
    CHECK(coords.at("a") == pf::Coord{1.5, 2.0});
    CHECK(dss::parse_buscoords("a,1,2\n").size() == 1);
    CHECK(code_of([] { dss::parse_buscoords("a,1,2\nb,x,y\n"); }) == ErrorCode::MalformedRow);
}
