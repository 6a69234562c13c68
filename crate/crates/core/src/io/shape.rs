//! Load-shape file: comma-separated, `#` comments, a header naming the
//! columns `hour,gross,net`, then one row per hour numbered from 1.

use super::read_text;
use crate::error::{Error, Result};
use crate::simulate::LoadShape;

const BUNDLED: &str = include_str!("../../data/load_shape.csv");

pub fn bundled_load_shape() -> LoadShape {
    parse_load_shape(BUNDLED, "load_shape.csv").expect("bundled load shape parses")
}

pub fn read_load_shape(path: &std::path::Path) -> Result<LoadShape> {
    parse_load_shape(&read_text(path)?, &path.display().to_string())
}

pub fn parse_load_shape(text: &str, origin: &str) -> Result<LoadShape> {
    let err = |line: usize, message: String| Error::Parse {
        path: origin.to_string(),
        line,
        message,
    };
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let header_line = reader.position().line().max(1) as usize;
    let headers = reader
        .headers()
        .map_err(|e| err(header_line, e.to_string()))?
        .clone();
    let column = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| err(header_line, format!("missing column {name:?}")))
    };
    let (c_hour, c_gross, c_net) = (column("hour")?, column("gross")?, column("net")?);

    let mut rows: Vec<(usize, usize, f64, f64)> = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| err(e.position().map_or(0, |p| p.line() as usize), e.to_string()))?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        let field = |i: usize, what: &str| -> Result<f64> {
            let tok = record.get(i).unwrap_or("");
            let v: f64 = tok
                .parse()
                .map_err(|_| err(line, format!("cannot parse {what} from {tok:?}")))?;
            if v.is_finite() {
                Ok(v)
            } else {
                Err(err(line, format!("{what} must be finite")))
            }
        };
        let hour = field(c_hour, "hour")?;
        if hour.fract() != 0.0 || hour < 1.0 {
            return Err(err(line, format!("hour {hour} is not a positive integer")));
        }
        rows.push((line, hour as usize, field(c_gross, "gross")?, field(c_net, "net")?));
    }
    let h = rows.len();
    if h == 0 {
        return Err(err(header_line, "no hourly rows".into()));
    }
    let mut gross = vec![f64::NAN; h];
    let mut net = vec![f64::NAN; h];
    for &(line, hour, g, n) in &rows {
        if hour > h {
            return Err(err(line, format!("hour {hour} outside 1..={h}")));
        }
        if !gross[hour - 1].is_nan() {
            return Err(err(line, format!("hour {hour} appears twice")));
        }
        gross[hour - 1] = g;
        net[hour - 1] = n;
    }
    let shape = LoadShape { gross, net };
    shape.validate().map_err(|e| err(header_line, e.to_string()))?;
    Ok(shape)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_shape_has_a_day() {
        let s = bundled_load_shape();
        assert_eq!(s.hours(), 24);
        assert!(s.net_mean() < 1.0);
    }

    #[test]
    fn rows_may_come_in_any_order() {
        let s = parse_load_shape("hour,gross,net\n2,1.5,1\n1,0.5,0.2\n", "x").unwrap();
        assert_eq!(s.gross, vec![0.5, 1.5]);
        assert_eq!(s.net, vec![0.2, 1.0]);
    }

    #[test]
    fn errors_carry_line_numbers() {
        let text = "# c\nhour,gross,net\n1,1.0,0.5\n2,abc,0.5\n";
        match parse_load_shape(text, "shape.csv") {
            Err(Error::Parse { path, line, message }) => {
                assert_eq!(path, "shape.csv");
                assert_eq!(line, 4, "{message}");
                assert!(message.contains("gross"));
            }
            other => panic!("{other:?}"),
        }
        let dup = "hour,gross,net\n1,1,1\n1,1,1\n";
        assert!(matches!(parse_load_shape(dup, "d"), Err(Error::Parse { line: 3, .. })));
        let gap = "hour,gross,net\n1,1,1\n3,1,1\n";
        assert!(matches!(parse_load_shape(gap, "g"), Err(Error::Parse { line: 3, .. })));
        let inf = "hour,gross,net\n1,inf,1\n";
        assert!(parse_load_shape(inf, "i").is_err());
        assert!(parse_load_shape("hour,gross\n1,1\n", "m").is_err());
    }

    #[test]
    fn gross_mean_must_be_one() {
        assert!(parse_load_shape("hour,gross,net\n1,2,1\n", "x").is_err());
    }
}
