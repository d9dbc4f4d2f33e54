#include <doctest.h>

#include <sstream>
#include <string>
#include <vector>

#include "dcqr/data_io.hpp"
#include "dcqr/error.hpp"
#include "dcqr/simulate.hpp"

using namespace dcqr;

namespace {

std::string error_of(const std::string& text) {
    std::istringstream is(text);
    try {
        read_dataset(is, "d.csv");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::InvalidInput);
        return e.what();
    }
    return "";
}

}  // namespace

TEST_CASE("dataset round trip is exact") {
    auto s = default_scenario(ScenarioKind::GroupEffect);
    s.censor_bound = 3.0;
    const auto rep = simulate(s, 200, 1);
    std::stringstream ss;
    write_dataset(ss, rep.dataset, rep.true_times);
    const auto back = read_dataset(ss);
    CHECK(back.dataset.feature_names == rep.dataset.feature_names);
    CHECK(back.true_times == rep.true_times);
    REQUIRE(back.dataset.size() == 200);
    for (std::size_t i = 0; i < 200; ++i) {
        CHECK(back.dataset.records[i].time == rep.dataset.records[i].time);
        CHECK(back.dataset.records[i].event == rep.dataset.records[i].event);
        CHECK(back.dataset.records[i].covariates == rep.dataset.records[i].covariates);
    }
}

TEST_CASE("reading without a truth column") {
    std::istringstream is("time,event,a,b\n1.5,1,0.1,2\n2,0,-3,4\n");
    const auto f = read_dataset(is);
    CHECK(f.true_times.empty());
    CHECK(f.dataset.feature_names == std::vector<std::string>{"a", "b"});
    CHECK(f.dataset.records[1].covariates == std::vector<double>{-3, 4});
    CHECK(f.dataset.records[1].event == 0);
}

TEST_CASE("malformed rows name the line") {
    CHECK(error_of("").find("d.csv:1:") != std::string::npos);
    CHECK(error_of("event,time\n1,1\n").find("d.csv:1:") != std::string::npos);
    CHECK(error_of("time,event,x\n1,1,0\n2,1,abc\n").find("d.csv:3:") != std::string::npos);
    CHECK(error_of("time,event,x\n1,2,0\n").find("d.csv:2:") != std::string::npos);
    CHECK(error_of("time,event,x\n0,1,0\n").find("d.csv:2:") != std::string::npos);
    CHECK(error_of("time,event,x\n-1,1,0\n").find("d.csv:2:") != std::string::npos);
    CHECK(error_of("time,event,x\n1,1,0\n1,1\n").find("d.csv:3:") != std::string::npos);
    CHECK(error_of("time,event,x\n").find("d.csv") != std::string::npos);
}

TEST_CASE("covariates are selected by name") {
    std::istringstream is("time,b,event,a\n1,10,1,20\n2,11,0,21\n");
    const auto x = read_covariates(is, {"a", "b"});
    REQUIRE(x.rows() == 2);
    REQUIRE(x.cols() == 2);
    CHECK(x(0, 0) == 20);
    CHECK(x(1, 1) == 11);
    std::istringstream missing("time,event,a\n1,1,2\n");
    CHECK_THROWS_AS(read_covariates(missing, {"a", "z"}), Error);
}

TEST_CASE("missing files are invalid input") {
    CHECK_THROWS_AS(read_dataset("/nonexistent/data.csv"), Error);
}
