use std::collections::HashMap;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

use super::{
    AttributeDescriptor, Domain, Event, InteractionLog, PrivateAttributeTable,
};

/// Loads MovieLens-1M style "::"-delimited files and splits items into
/// source (release year < `year_threshold`) and target domains.
///
/// Ratings above 3 stars become positive events. Users left without
/// events in either domain are dropped from both; user and item ids are
/// re-indexed densely in ascending raw-id order. Gender becomes a
/// 2-class attribute (F=0, M=1) and age a 3-class bucket: under 35,
/// 35 to 45 inclusive, over 45.
pub fn load_movielens(
    ratings_path: &Path,
    users_path: &Path,
    movies_path: &Path,
    year_threshold: i32,
) -> Result<(InteractionLog, InteractionLog, PrivateAttributeTable)> {
    let movie_years = parse_movies(movies_path)?;
    let profiles = parse_users(users_path)?;
    let ratings = parse_ratings(ratings_path)?;

    // Positive events per user, split by release year.
    let mut per_user: HashMap<u32, (Vec<(u32, i64)>, Vec<(u32, i64)>)> = HashMap::new();
    for r in &ratings {
        if r.rating <= 3 {
            continue;
        }
        let year = *movie_years.get(&r.movie).ok_or_else(|| {
            Error::data(format!("rating references unknown movie {}", r.movie))
        })?;
        let entry = per_user.entry(r.user).or_default();
        if year < year_threshold {
            entry.0.push((r.movie, r.timestamp));
        } else {
            entry.1.push((r.movie, r.timestamp));
        }
    }

    // Shared users only, in ascending raw-id order for dense re-indexing.
    let mut kept: Vec<u32> = per_user
        .iter()
        .filter(|(u, (s, t))| !s.is_empty() && !t.is_empty() && profiles.contains_key(u))
        .map(|(&u, _)| u)
        .collect();
    kept.sort_unstable();
    if kept.is_empty() {
        return Err(Error::data(
            "no users remain with events in both domains; check the year threshold",
        ));
    }

    // Dense item vocabularies per domain, ascending raw movie id.
    let mut source_ids: Vec<u32> = Vec::new();
    let mut target_ids: Vec<u32> = Vec::new();
    for u in &kept {
        let (s, t) = &per_user[u];
        source_ids.extend(s.iter().map(|&(m, _)| m));
        target_ids.extend(t.iter().map(|&(m, _)| m));
    }
    source_ids.sort_unstable();
    source_ids.dedup();
    target_ids.sort_unstable();
    target_ids.dedup();
    let source_index: HashMap<u32, u32> =
        source_ids.iter().enumerate().map(|(i, &m)| (m, i as u32)).collect();
    let target_index: HashMap<u32, u32> =
        target_ids.iter().enumerate().map(|(i, &m)| (m, i as u32)).collect();

    let build = |events: &[(u32, i64)], index: &HashMap<u32, u32>| -> Vec<Event> {
        let mut evs: Vec<Event> = events
            .iter()
            .map(|&(m, ts)| Event { item: index[&m], timestamp: ts })
            .collect();
        // stable: timestamp ties keep file order
        evs.sort_by_key(|e| e.timestamp);
        evs
    };

    let mut source_histories = Vec::with_capacity(kept.len());
    let mut target_histories = Vec::with_capacity(kept.len());
    let mut values = Vec::with_capacity(kept.len());
    for u in &kept {
        let (s, t) = &per_user[u];
        source_histories.push(build(s, &source_index));
        target_histories.push(build(t, &target_index));
        let p = &profiles[u];
        values.push(vec![p.gender, p.age_bucket]);
    }

    let source = InteractionLog {
        domain: Domain::Source,
        vocab_size: source_ids.len() as u32,
        histories: source_histories,
    };
    let target = InteractionLog {
        domain: Domain::Target,
        vocab_size: target_ids.len() as u32,
        histories: target_histories,
    };
    let table = PrivateAttributeTable {
        attributes: vec![
            AttributeDescriptor { name: "gender".into(), classes: 2 },
            AttributeDescriptor { name: "age".into(), classes: 3 },
        ],
        values,
        public: vec![false; kept.len()],
    };
    source.validate()?;
    target.validate()?;
    table.validate()?;
    Ok((source, target, table))
}

struct Rating {
    user: u32,
    movie: u32,
    rating: u8,
    timestamp: i64,
}

struct Profile {
    gender: u32,
    age_bucket: u32,
}

/// Age in years mapped to the three buckets. MovieLens-1M encodes age
/// groups by their lowest year (1, 18, 25, 35, 45, 50, 56), which this
/// rule buckets the same way it would bucket exact ages.
fn age_bucket(age: u32) -> u32 {
    if age < 35 {
        0
    } else if age <= 45 {
        1
    } else {
        2
    }
}

/// Reads a "::"-delimited file as Latin-1-tolerant lines.
fn read_lines(path: &Path) -> Result<Vec<String>> {
    let bytes = fs::read(path)?;
    Ok(bytes
        .split(|&b| b == b'\n')
        .filter(|l| !l.is_empty())
        .map(|l| {
            let l = l.strip_suffix(b"\r").unwrap_or(l);
            String::from_utf8_lossy(l).into_owned()
        })
        .collect())
}

fn parse_err(path: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        file: path.display().to_string(),
        line,
        message: message.into(),
    }
}

fn parse_movies(path: &Path) -> Result<HashMap<u32, i32>> {
    let mut years = HashMap::new();
    for (i, line) in read_lines(path)?.iter().enumerate() {
        let lineno = i + 1;
        let fields: Vec<&str> = line.splitn(3, "::").collect();
        if fields.len() != 3 {
            return Err(parse_err(path, lineno, "expected MovieID::Title::Genres"));
        }
        let id: u32 = fields[0]
            .parse()
            .map_err(|_| parse_err(path, lineno, format!("bad movie id {:?}", fields[0])))?;
        let title = fields[1].trim_end();
        let year = title
            .strip_suffix(')')
            .and_then(|t| t.rsplit_once('('))
            .and_then(|(_, y)| y.parse::<i32>().ok())
            .ok_or_else(|| {
                parse_err(path, lineno, format!("no trailing (YYYY) in title {title:?}"))
            })?;
        years.insert(id, year);
    }
    Ok(years)
}

fn parse_users(path: &Path) -> Result<HashMap<u32, Profile>> {
    let mut profiles = HashMap::new();
    for (i, line) in read_lines(path)?.iter().enumerate() {
        let lineno = i + 1;
        let fields: Vec<&str> = line.split("::").collect();
        if fields.len() < 3 {
            return Err(parse_err(path, lineno, "expected UserID::Gender::Age::..."));
        }
        let id: u32 = fields[0]
            .parse()
            .map_err(|_| parse_err(path, lineno, format!("bad user id {:?}", fields[0])))?;
        let gender = match fields[1] {
            "F" => 0,
            "M" => 1,
            other => {
                return Err(parse_err(path, lineno, format!("unknown gender {other:?}")))
            }
        };
        let age: u32 = fields[2]
            .parse()
            .map_err(|_| parse_err(path, lineno, format!("unknown age code {:?}", fields[2])))?;
        profiles.insert(id, Profile { gender, age_bucket: age_bucket(age) });
    }
    Ok(profiles)
}

fn parse_ratings(path: &Path) -> Result<Vec<Rating>> {
    let mut ratings = Vec::new();
    for (i, line) in read_lines(path)?.iter().enumerate() {
        let lineno = i + 1;
        let fields: Vec<&str> = line.split("::").collect();
        if fields.len() != 4 {
            return Err(parse_err(
                path,
                lineno,
                "expected UserID::MovieID::Rating::Timestamp",
            ));
        }
        fn field<T: std::str::FromStr>(
            path: &Path,
            lineno: usize,
            raw: &str,
            what: &str,
        ) -> Result<T> {
            raw.parse()
                .map_err(|_| parse_err(path, lineno, format!("bad {what} {raw:?}")))
        }
        ratings.push(Rating {
            user: field(path, lineno, fields[0], "user id")?,
            movie: field(path, lineno, fields[1], "movie id")?,
            rating: field(path, lineno, fields[2], "rating")?,
            timestamp: field(path, lineno, fields[3], "timestamp")?,
        });
    }
    Ok(ratings)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_file(dir: &Path, name: &str, content: &str) -> std::path::PathBuf {
        let p = dir.join(name);
        let mut f = fs::File::create(&p).unwrap();
        f.write_all(content.as_bytes()).unwrap();
        p
    }

    fn fixture(dir: &Path) -> (std::path::PathBuf, std::path::PathBuf, std::path::PathBuf) {
        // movies 1,2 are pre-1990 (source); 3,4 are 1990+ (target)
        let movies = write_file(
            dir,
            "movies.dat",
            "1::Old One (1985)::Drama\n2::Old Two (1989)::Comedy\n\
             3::New One (1995)::Drama\n4::New Two (2000)::Action\n",
        );
        // user 1: both domains; user 2: source only (dropped);
        // user 3: rating of 3 filtered, leaving both domains
        let ratings = write_file(
            dir,
            "ratings.dat",
            "1::1::5::100\n1::3::4::200\n1::4::5::150\n\
             2::2::4::100\n\
             3::2::5::300\n3::3::3::50\n3::4::4::400\n",
        );
        let users = write_file(
            dir,
            "users.dat",
            "1::F::1::10::48067\n2::M::56::16::70072\n3::M::36::15::55117\n",
        );
        (ratings, users, movies)
    }

    #[test]
    fn splits_domains_and_drops_single_domain_users() {
        let dir = tempfile::tempdir().unwrap();
        let (r, u, m) = fixture(dir.path());
        let (source, target, table) = load_movielens(&r, &u, &m, 1990).unwrap();
        // users 1 and 3 kept, user 2 dropped
        assert_eq!(source.user_count(), 2);
        assert_eq!(target.user_count(), 2);
        assert_eq!(table.user_count(), 2);
        // source vocab: movies 1, 2; target vocab: movies 3, 4
        assert_eq!(source.vocab_size, 2);
        assert_eq!(target.vocab_size, 2);
        // user 1 target events ordered by timestamp: movie4(150), movie3(200)
        let t0: Vec<u32> = target.sequence(0).iter().map(|e| e.item).collect();
        assert_eq!(t0, vec![1, 0]);
    }

    #[test]
    fn rating_of_three_is_excluded() {
        let dir = tempfile::tempdir().unwrap();
        let (r, u, m) = fixture(dir.path());
        let (_, target, _) = load_movielens(&r, &u, &m, 1990).unwrap();
        // user 3's only target events: movie 4 (movie 3 was rated 3)
        let t1: Vec<u32> = target.sequence(1).iter().map(|e| e.item).collect();
        assert_eq!(t1, vec![1]);
    }

    #[test]
    fn attributes_follow_kept_users() {
        let dir = tempfile::tempdir().unwrap();
        let (r, u, m) = fixture(dir.path());
        let (_, _, table) = load_movielens(&r, &u, &m, 1990).unwrap();
        // user 1: F, age 1 -> under 35; user 3: M, age 36 -> middle bucket
        assert_eq!(table.values[0], vec![0, 0]);
        assert_eq!(table.values[1], vec![1, 1]);
    }

    #[test]
    fn age_buckets() {
        assert_eq!(age_bucket(1), 0);
        assert_eq!(age_bucket(25), 0);
        assert_eq!(age_bucket(35), 1);
        assert_eq!(age_bucket(36), 1);
        assert_eq!(age_bucket(45), 1);
        assert_eq!(age_bucket(50), 2);
        assert_eq!(age_bucket(56), 2);
    }

    #[test]
    fn malformed_line_names_file_and_line() {
        let dir = tempfile::tempdir().unwrap();
        let (_, u, m) = fixture(dir.path());
        let bad = write_file(dir.path(), "bad.dat", "1::1::5::100\n1::3::4\n");
        let err = load_movielens(&bad, &u, &m, 1990).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("bad.dat:2"), "{msg}");
    }

    #[test]
    fn bad_age_is_a_parse_error() {
        let dir = tempfile::tempdir().unwrap();
        let (r, _, m) = fixture(dir.path());
        let bad = write_file(dir.path(), "users_bad.dat", "1::F::old::10::48067\n");
        let err = load_movielens(&r, &bad, &m, 1990).unwrap_err();
        assert!(err.to_string().contains("age"), "{err}");
    }

    #[test]
    fn title_without_year_is_a_parse_error() {
        let dir = tempfile::tempdir().unwrap();
        let (r, u, _) = fixture(dir.path());
        let bad = write_file(dir.path(), "movies_bad.dat", "1::No Year Here::Drama\n");
        let err = load_movielens(&r, &u, &bad, 1990).unwrap_err();
        assert!(err.to_string().contains("title"), "{err}");
    }

    #[test]
    fn latin1_titles_do_not_break_parsing() {
        let dir = tempfile::tempdir().unwrap();
        let (r, u, _) = fixture(dir.path());
        let p = dir.path().join("movies_latin1.dat");
        let mut f = fs::File::create(&p).unwrap();
        // "Am\xe9lie (1985)" in Latin-1, plus the rest of the fixture catalog
        f.write_all(b"1::Am\xe9lie (1985)::Comedy\n2::Old Two (1989)::Comedy\n3::New One (1995)::Drama\n4::New Two (2000)::Action\n")
            .unwrap();
        let (source, _, _) = load_movielens(&r, &u, &p, 1990).unwrap();
        assert_eq!(source.vocab_size, 2);
    }
}
